"""Backend selection for the tree kernels.

The compiled extension is preferred when importable; the pure-numpy fallback
is always available and produces bit-identical results. Set
PIBENCH_FORCE_BACKEND=pure or =compiled to override (the latter fails loudly
if the extension is missing rather than silently falling back).
"""
import logging
import os

from . import pyref

log = logging.getLogger(__name__)

_forced = os.environ.get("PIBENCH_FORCE_BACKEND")

if _forced == "pure":
    backend = pyref
elif _forced == "compiled":
    from . import _core as backend  # ImportError here is intentional
elif _forced:
    raise ImportError(f"PIBENCH_FORCE_BACKEND={_forced!r}: expected "
                      "'pure' or 'compiled'")
else:
    try:
        from . import _core as backend
    except ImportError:
        log.info("compiled kernel unavailable; using the pure-numpy fallback")
        backend = pyref

BACKEND = backend.BACKEND
expand_presort = backend.expand_presort
grow_tree = backend.grow_tree
apply_tree = backend.apply_tree
