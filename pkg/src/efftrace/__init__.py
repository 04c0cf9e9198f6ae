"""Trace semantics, effect-refined types, and equivalence games for a
higher-order shared-variable concurrent metalanguage.

The library evaluates programs to finite sets of environment-interaction
traces, interprets effect annotations over abstract heap locations, and
decides effect-refined program approximation by exhaustively solving a
two-player matching game over a configured finite heap universe.
"""

from .store import (Loc, Heap, HeapUniverse, heap_new, enumerate_heaps,
                    check_closure, StoreError, MissingLocation, AllocationError)
from .lang import parse, pretty, free_vars, substitute, Term, ParseError

__all__ = [
    "Loc", "Heap", "HeapUniverse", "heap_new", "enumerate_heaps",
    "check_closure", "StoreError", "MissingLocation", "AllocationError",
    "parse", "pretty", "free_vars", "substitute", "Term", "ParseError",
]
