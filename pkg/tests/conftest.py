from __future__ import annotations

import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

from displib import fileformat  # noqa: E402

DATA = pathlib.Path(__file__).parent / "data"


def data_text(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def junction():
    instance, _ = fileformat.parse_instance(data_text("junction_instance.json"))
    return instance


@pytest.fixture(scope="session")
def junction_solution():
    solution, _ = fileformat.parse_solution(data_text("junction_solution.json"))
    return solution


@pytest.fixture(scope="session")
def junction_swapped():
    solution, _ = fileformat.parse_solution(
        data_text("junction_solution_swapped.json"))
    return solution
