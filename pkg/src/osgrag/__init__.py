"""Open-vocabulary 3D scene graphs from RGB-D sequences, indexed for retrieval-augmented queries."""

__version__ = "0.1.0"

SCHEMA_VERSION = "osg-rag/1"
