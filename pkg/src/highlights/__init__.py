"""Research-highlight generation: pointer-generator network with coverage,
pluggable embeddings, summarization metrics, and carbon accounting."""

__version__ = "0.1.0"
