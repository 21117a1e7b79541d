"""Shared fixtures: a small rotation-family dataset that trains in seconds."""

import pytest

from ditto import DomainSpec, MixtureSpec, Rng, SizeSpec, generate_synthetic

# irregular class layout: no rotation maps the class set onto itself
TRIANGLE = [[0.0, 2.2], [1.9, -1.1], [-2.3, -1.4]]


def make_dataset(angles=(15, 30, 45), sizes=None, sigma=0.45, seed=7):
    sizes = sizes or SizeSpec(labeled=240, unlabeled=240, fewshot=30, eval=120)
    mixture = MixtureSpec(means=TRIANGLE, sigma=sigma)
    domains = [DomainSpec(id="src", kind="source",
                          transform={"kind": "identity"}, sizes=sizes)]
    for ang in angles:
        domains.append(DomainSpec(id=f"rot{ang}", kind="target",
                                  transform={"kind": "rotation", "angle": float(ang)},
                                  sizes=sizes))
    return generate_synthetic(mixture, domains, Rng(seed))


@pytest.fixture(scope="session")
def small_dataset():
    return make_dataset()
