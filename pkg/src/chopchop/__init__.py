"""Distilled-batch Byzantine atomic broadcast: brokers batch client messages,
distill their signatures and sequence numbers, and hand servers compact,
self-authenticating batches to order and deduplicate."""

from .batch import DistilledBatch, Submission, build_proposal, decode, distill, encode, verify_batch
from .broker import Broker, WindowConfig, sift_multisignatures
from .client import Client
from .crypto import get_scheme
from .directory import Directory
from .ordering import Sequencer
from .server import Server

__version__ = "0.1.0"

__all__ = [
    "Broker",
    "Client",
    "Directory",
    "DistilledBatch",
    "Sequencer",
    "Server",
    "Submission",
    "WindowConfig",
    "build_proposal",
    "decode",
    "distill",
    "encode",
    "get_scheme",
    "sift_multisignatures",
    "verify_batch",
]
