"""Co-training of modular visuomotor diffusion policies across simulated,
human, and real demonstration streams, with a synthetic three-domain
benchmark world for end-to-end evaluation."""

__version__ = "0.1.0"
