from pathlib import Path

import pytest

from currclean.data_model import load_csv, load_schema_config
from currclean.rules import parse_rules

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def career_schema():
    return load_schema_config(DATA / "career.schema.json")


@pytest.fixture()
def career_dataset(career_schema):
    return load_csv(DATA / "career.csv", career_schema)


@pytest.fixture(scope="session")
def career_rules(career_schema):
    text = (DATA / "career.rules").read_text()
    return parse_rules(text, career_schema)
