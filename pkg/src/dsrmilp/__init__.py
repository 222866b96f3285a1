"""Single-step distribution system restoration as a mixed-integer linear program."""
from .feeder import (
    Bus,
    Edge,
    Feeder,
    FeederError,
    OutageScenario,
    derive_post_outage,
    dump_feeder,
    load_feeder,
    load_scenario,
)
from .ieee37 import builtin_ieee37

__version__ = "0.1.0"
