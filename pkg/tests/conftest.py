import pytest

from finslerchange import cli, metricspec


def make(**doc):
    doc.setdefault("name", "inline")
    return metricspec.from_dict(doc)


def catalog(name, **samples):
    path = cli.catalog_dir() / f"{name}.yaml"
    return metricspec.load(path, samples=samples or None)


@pytest.fixture
def euclid2():
    return make(dimension=2, L="sqrt(y1^2 + y2^2)")
