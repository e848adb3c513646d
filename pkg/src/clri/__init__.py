"""Error dynamics of learning agents in multi-agent systems.

Modules: :mod:`clri.theory` (expected-error recurrences), :mod:`clri.pac`
(sample-complexity bounds), :mod:`clri.sim` (agent-based simulator),
:mod:`clri.estimate` (rate estimation from traces), :mod:`clri.repro`
(presets and unit mappings) and :mod:`clri.cli` (command line).
"""

__version__ = "0.1.0"
