"""Human review of generated candidate classes.

The registry produced by class generation is immutable; review is an
append-only log of decisions (keep, discard, merge, rename, edit_prompt,
finalize) folded over it. Folding the same log always yields the same state,
so a crashed or restarted review session resumes exactly where it left off.
"""

from .registry import (
    FINAL_SCHEMA,
    ReviewError,
    ReviewState,
    apply_decision,
    final_payload,
    fold,
    registry_hash,
    sort_candidates,
)

__all__ = [
    "FINAL_SCHEMA",
    "ReviewError",
    "ReviewState",
    "apply_decision",
    "final_payload",
    "fold",
    "registry_hash",
    "sort_candidates",
]
