"""HTTP bridge serving sentence embeddings over the /embed wire contract."""

__version__ = "0.1.0"
