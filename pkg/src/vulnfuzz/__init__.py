"""Vulnerability-oriented evolutionary fuzzing over a toy bytecode VM.

A graph-embedding model scores functions with a vulnerable probability,
those scores become per-block static vulnerable scores, and a generational
fuzzer selects seeds by score-sum fitness with an adaptive slight/heavy
mutation scheduler.
"""

__version__ = "0.1.0"
