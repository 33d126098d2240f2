import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))

from hornforge import load_triples, parse_rule

FIXTURE = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "sample_kg.tsv"


@pytest.fixture(scope="session")
def sample_kg():
    return load_triples(FIXTURE)


@pytest.fixture(scope="session")
def rule_r(sample_kg):
    # the running example: language of a person from country of birth
    return parse_rule("birthCountry(?a, ?c) & officialLang(?c, ?b) => speaks(?a, ?b)", sample_kg)
