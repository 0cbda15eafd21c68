"""Adaptive curriculum engine: corpus parsing, validation, engagement
tracking, scaffolding adaptation, session state and safe-append sync.

Submodules are imported lazily by the CLI so that hook invocations stay fast;
import what you need directly, e.g. ``from curriculum_engine import corpus``.
"""

__version__ = "0.1.0"
