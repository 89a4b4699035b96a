"""FCA-based topic extraction (CREA pipeline) and a three-prompt LLM topic protocol."""

__version__ = "0.1.0"
