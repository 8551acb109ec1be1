"""Three-branch synthetic-image detector built from class-specialised feature extractors."""

__version__ = "0.1.0"
