"""Semantic table annotation: columns to ontology classes (CTA), cells to KG entities (CEA)."""

__version__ = "0.1.0"
