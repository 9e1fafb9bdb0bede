"""Coexistence of a decoy-state BB84 link with live GPON traffic on a passive splitter tree."""

from .document import Document, DocumentError, load_document, parse_document
from .pipeline import Evaluation, LinkModel, analyze
from .topology import Topology, TopologyError, validate

__all__ = [
    "Document",
    "DocumentError",
    "Evaluation",
    "LinkModel",
    "Topology",
    "TopologyError",
    "analyze",
    "load_document",
    "parse_document",
    "validate",
]
