"""Irish-aware ASR evaluation harness - Source Package"""

__version__ = "0.3.0"
