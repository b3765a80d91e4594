"""Neighbourhood-interaction recommendation over heterogeneous graphs."""

from .graph import HeteroGraph, Interner, Metapath, NodeRef, Relation, TypeId, validate_metapath

__version__ = "0.1.0"
