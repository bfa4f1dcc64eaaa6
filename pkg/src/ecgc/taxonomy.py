"""Symbol sets shared across modules. Orders are part of serialized formats."""

RHYTHM_KINDS = (
    "NORMAL", "TACHYCARDIA", "BRADYCARDIA", "EXTRASYSTOLE", "COUPLET",
    "BIGEMINY", "TRIGEMINY", "AFIB", "ASYSTOLE",
)
REGULAR_KINDS = frozenset({"NORMAL", "TACHYCARDIA", "BRADYCARDIA"})
MORPHOLOGY_TAGS = ("qRs", "QS", "rSr'", "R", "rS", "Rs", "other")
