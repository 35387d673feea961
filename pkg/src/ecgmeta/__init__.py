"""Few-shot ECG question answering with meta-learned prefix fusion."""

__version__ = "0.1.0"
