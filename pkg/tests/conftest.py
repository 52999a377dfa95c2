import numpy as np
import pytest

from socparse.schema import AttributeSchema, make_relation_schema
from socparse.synthetic import schemas


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def kinship():
    return schemas()


@pytest.fixture
def tiny_schemas():
    rs = make_relation_schema(["per:friends", "per:children", "per:parents"],
                              inverse_pairs=[("per:children", "per:parents"), ("per:friends", "per:friends")])
    ats = AttributeSchema(("gender",), {"gender": ("male", "female")})
    return rs, ats


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line, print it, and fail the test when the check does not hold."""

    def record(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
