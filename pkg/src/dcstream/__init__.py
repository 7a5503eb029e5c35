"""Untraceable two-party streaming over DC-net groups.

The package splits into a cryptographic core (groups, keysched, merkle),
a round-based protocol engine (protocol), a deterministic network
simulator (sim), closed-form performance models (perf), experiment
reporting (reports, privacy), and a thin HTTP service plus CLI on top.
"""

__version__ = "0.1.0"
