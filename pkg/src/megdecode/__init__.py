"""megdecode: a CPU-scale Conformer testbed for MEG speech/phoneme decoding."""

__version__ = "0.1.0"
