"""The five Early Warning System investment pillars."""

from enum import Enum


class PillarId(str, Enum):
    """Four EWS pillars plus the cross-cutting one."""

    P1 = "P1"  # disaster risk knowledge
    P2 = "P2"  # hazard detection, monitoring and forecasting
    P3 = "P3"  # warning dissemination and communication
    P4 = "P4"  # preparedness to respond
    XP = "XP"  # cross-pillar: governance and sustainability


PILLAR_ORDER = (PillarId.P1, PillarId.P2, PillarId.P3, PillarId.P4, PillarId.XP)

# Accepted spellings in gold CSV label cells, after trim + casefold.
LABEL_ALIASES = {
    "pillar 1": PillarId.P1,
    "pillar 2": PillarId.P2,
    "pillar 3": PillarId.P3,
    "pillar 4": PillarId.P4,
    "cross-pillar": PillarId.XP,
    "cross pillar": PillarId.XP,
    "crosspillar": PillarId.XP,
    "p1": PillarId.P1,
    "p2": PillarId.P2,
    "p3": PillarId.P3,
    "p4": PillarId.P4,
    "xp": PillarId.XP,
}


def normalize_label(raw: str) -> PillarId:
    """Map a free-form label cell to a PillarId; raise KeyError if unknown."""
    return LABEL_ALIASES[raw.strip().casefold()]
