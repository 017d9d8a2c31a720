"""psylens: batch pipeline and evaluation toolkit for LLM-assisted psychiatric interviews.

The package covers corpus handling (transcripts, span annotations, symptom
taxonomy), segmentation, prompt construction and response parsing, a chat/embed
gateway with record-replay support, retrieval-augmented prompting, and the
evaluation suite (recall mid-token distance, example-based multilabel metrics,
BERTScore, G-Eval judging).
"""

__version__ = "0.1.0"
