"""Small shared builders for tests."""

from skytest.scenario import parse

MINIMAL = """\
seed 1
world bounds -10 -10 0 10 10 12
marker id 7 pos 0 0 0 yaw 0
drone start 3 0 0 0
mission land marker 7
"""


def minimal(extra: str = "") -> str:
    return MINIMAL + extra


def scenario(extra: str = ""):
    return parse(minimal(extra))
