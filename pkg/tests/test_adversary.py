import pytest
from hypothesis import given, settings, strategies as st

from truvrf.adversary import ServerBehavior, apply_behavior, lazy_volume
from truvrf.datasets import UnlearnRequest, gen_synthetic, random_request
from truvrf.errors import InfeasibleScenario, InvalidInput

DATA = gen_synthetic(4, 300, 4, 2.0, 0)


def test_honest_is_identity():
    req = random_request(DATA, {1: 40, 2: 7}, 0)
    assert apply_behavior(req, ServerBehavior("honest"), DATA) == req


def test_neglecting_forgets_nothing():
    req = random_request(DATA, {0: 100}, 0)
    out = apply_behavior(req, ServerBehavior("neglecting"), DATA)
    assert out.total == 0 and out.classes == []


def test_lazy_half_of_hundred():
    req = random_request(DATA, {3: 100}, 0)
    out = apply_behavior(req, ServerBehavior("lazy", 0.5, 4), DATA)
    assert out.volumes == {3: 50}
    assert out.all_ids() <= req.all_ids()


def test_lazy_floor_arithmetic():
    assert lazy_volume(100, 0.5) == 50
    assert lazy_volume(10, 0.9) == 1
    assert lazy_volume(7, 0.5) == 3
    assert lazy_volume(3, 0.99) == 0


def test_deceiving_substitutes_same_volume():
    req = random_request(DATA, {0: 120, 2: 30}, 1)
    out = apply_behavior(req, ServerBehavior("deceiving", seed=9), DATA)
    assert out.volumes == req.volumes
    assert not out.all_ids() & req.all_ids()
    assert all(DATA.label_of(i) == c for c in out.classes for i in out.per_class[c])


def test_deceiving_infeasible():
    req = random_request(DATA, {0: 200}, 1)
    with pytest.raises(InfeasibleScenario):
        apply_behavior(req, ServerBehavior("deceiving"), DATA)


@pytest.mark.parametrize("kw", [dict(kind="sloppy"), dict(kind="lazy"), dict(kind="lazy", keep_fraction=1.0), dict(kind="honest", keep_fraction=0.5)])
def test_behavior_validation(kw):
    with pytest.raises(InvalidInput):
        ServerBehavior(**kw)


def test_behavior_dict_round_trip():
    for b in (ServerBehavior("honest"), ServerBehavior("lazy", 0.25, 3), ServerBehavior("Deceiving", seed=2)):
        assert ServerBehavior.from_dict(b.to_dict()) == b
    assert ServerBehavior("Neglecting").kind == "neglecting"
    assert ServerBehavior("lazy", 0.5).dishonest and not ServerBehavior().dishonest


def test_request_must_belong_to_data():
    with pytest.raises(InvalidInput):
        apply_behavior(UnlearnRequest({0: frozenset({10**6})}), ServerBehavior("honest"), DATA)


@settings(max_examples=80, deadline=None)
@given(volume=st.integers(1, 150), f=st.floats(0.01, 0.99), seed=st.integers(0, 10**6))
def test_lazy_property(volume, f, seed):
    req = random_request(DATA, {1: volume}, seed)
    out = apply_behavior(req, ServerBehavior("lazy", f, seed), DATA)
    assert out.volume(1) == lazy_volume(volume, f) <= volume
    assert out.all_ids() <= req.all_ids()
