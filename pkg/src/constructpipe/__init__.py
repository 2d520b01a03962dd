"""Human-in-the-loop pipeline for detecting, generating, and classifying
latent constructs (frames, topics) in text corpora with chat-completion models.
"""

__version__ = "0.1.0"
