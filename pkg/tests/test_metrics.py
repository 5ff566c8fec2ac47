import math

import pytest

from truvrf import nnet
from truvrf.datasets import UnlearnRequest, concat, gen_synthetic, split_per_class
from truvrf.errors import CalibrationError, InvalidInput
from truvrf.metrics import (
    ClassVerdict,
    UnlearningMeasurement,
    build_unlearning_measurement,
    class_verdict_from_profiles,
    deviation,
    gap_ratio,
    infer_volume,
    um_from_shadow_ms,
    verify_class,
    verify_sample,
    verify_volume,
)
from truvrf.sensitivity import AuxiliaryData, SensitivityProfile
from truvrf.unlearning import derive_seed, fit, retrain_unlearn, sisa_train

SPEC = nnet.ModelSpec(8, (32, 16), 5)
CFG = nnet.TrainConfig(0.05, 20, 32, 0)


@pytest.fixture(scope="module")
def trained():
    full = gen_synthetic(5, 600, 8, 6.0, 1)
    test, train = split_per_class(full, {c: 100 for c in range(5)}, 2)
    return train, test, fit(train, SPEC, CFG, 3)


def test_neglecting_gives_exact_zero(trained):
    train, test, m = trained
    aux = AuxiliaryData.sample(test, range(5), 50, 0)
    v = verify_class(m, m, aux, 0.01)
    assert v.unlearned_classes == []
    assert all(r.relative_change == 0.0 and r.ds == 0.0 for r in v.per_class.values())


def test_threshold_zero_flags_any_change():
    o = SensitivityProfile({0: 1.0, 1: 2.0}, 0.01, 1, "test", 5)
    u = SensitivityProfile({0: 1.0 + 1e-12, 1: 2.0}, 0.01, 1, "test", 5)
    v = class_verdict_from_profiles(o, u, 0.0)
    assert v.unlearned_classes == [0]


def test_relative_change_arithmetic():
    o = SensitivityProfile({0: 10.0, 1: 4.0, 2: 0.0}, 0.01, 1, "test", 5)
    u = SensitivityProfile({0: 10.05, 1: 2.0, 2: 0.0}, 0.01, 1, "test", 5)
    v = class_verdict_from_profiles(o, u, 0.01)
    assert v.per_class[0].relative_change == pytest.approx(0.005)
    assert v.per_class[1].relative_change == pytest.approx(0.5)
    assert v.per_class[2].relative_change == 0.0
    assert v.unlearned_classes == [1]
    assert isinstance(v, ClassVerdict)


def test_verify_class_rejects_mismatched_models(trained):
    train, test, m = trained
    other = nnet.init_model(nnet.ModelSpec(8, (4,), 5), 0)
    aux = AuxiliaryData.sample(test, range(5), 10, 0)
    with pytest.raises(InvalidInput):
        verify_class(m, other, aux, 0.01)
    with pytest.raises(InvalidInput):
        verify_class(m, sisa_train(train, 2, SPEC, nnet.TrainConfig(0.05, 1, 64), 0), aux, 0.01)


def test_um_examples():
    assert um_from_shadow_ms([10, 8, 6, 4]) == 2.0
    assert um_from_shadow_ms([7.5, 3.0]) == 4.5
    with pytest.raises(InvalidInput):
        um_from_shadow_ms([1.0])


def test_infer_volume_examples():
    assert infer_volume(5.0, 2.0, 100) == 300
    assert infer_volume(4.0, 2.0, 100) == 200
    assert infer_volume(0.0, 2.0, 100) == 0
    assert infer_volume(-3.0, 2.0, 100) == 0
    with pytest.raises(InvalidInput):
        infer_volume(1.0, 0.0, 100)


def test_deviation_examples():
    assert deviation(500, 470) == pytest.approx(0.06)
    assert deviation(1000, 1000) == 0.0
    assert deviation(200, 0) == 1.0
    with pytest.raises(InvalidInput):
        deviation(0, 5)


def test_gap_ratio_arithmetic():
    assert gap_ratio(10.0, 7.0) == pytest.approx(0.3)
    assert gap_ratio(10.0, 12.0) == pytest.approx(-0.2)
    assert gap_ratio(0.0, 0.0) == 0.0


def test_identical_probes_are_honest(trained):
    _, test, m = trained
    aux = AuxiliaryData.sample(test, [2, 4], 30, 0)
    as_target = AuxiliaryData(aux.per_class, "target")
    v = verify_sample(m, as_target, aux, 0.01, 0.0)
    assert v.gap_ratio == 0.0 and v.honest


def test_verify_sample_requires_matching_probes(trained):
    _, test, m = trained
    a = AuxiliaryData.sample(test, [1], 20, 0)
    with pytest.raises(InvalidInput):
        verify_sample(m, AuxiliaryData.sample(test, [1], 10, 0, "target"), a, 0.01, 0.1)
    with pytest.raises(InvalidInput):
        verify_sample(m, AuxiliaryData.sample(test, [2], 20, 0, "target"), a, 0.01, 0.1)


def _sweep_inputs(seed):
    full = gen_synthetic(5, [1100, 600, 600, 600, 600], 8, 6.0, seed)
    test, rest = split_per_class(full, {c: 100 for c in range(5)}, seed)
    target = rest.of_class(0)
    others = rest.select_mask(rest.labels != 0)
    aux = AuxiliaryData.sample(test, [0], 50, seed)
    return target, others, aux


def test_measurement_fields_and_round_trip():
    target, others, aux = _sweep_inputs(0)
    spec = nnet.ModelSpec(8, (), 5)
    um = build_unlearning_measurement(target, others, spec, nnet.TrainConfig(0.5, 30, 10_000), 3, 100, aux, 0.01, 0, base_volume=50)
    assert um.shadow_volumes == (150, 250, 350)
    assert um.um_batch == pytest.approx((um.shadow_ms[0] - um.shadow_ms[-1]) / 2)
    assert UnlearningMeasurement.from_dict(um.to_dict()) == um
    n2 = build_unlearning_measurement(target, others, spec, nnet.TrainConfig(0.5, 30, 10_000), 2, 100, aux, 0.01, 0)
    assert n2.um_batch == pytest.approx(abs(n2.shadow_ms[0] - n2.shadow_ms[1]))


def test_measurement_preconditions():
    target, others, aux = _sweep_inputs(0)
    spec = nnet.ModelSpec(8, (), 5)
    with pytest.raises(InvalidInput):
        build_unlearning_measurement(target, others, spec, CFG, 1, 100, aux, 0.01, 0)
    with pytest.raises(InvalidInput):
        build_unlearning_measurement(target, others, spec, CFG, 5, 300, aux, 0.01, 0)
    with pytest.raises(InvalidInput):
        build_unlearning_measurement(others, target, spec, CFG, 2, 10, aux, 0.01, 0)


def test_flat_sweep_is_a_calibration_failure():
    target, others, aux = _sweep_inputs(0)
    # zero epochs: every shadow is the same initial network, so UM_batch == 0
    with pytest.raises(CalibrationError):
        build_unlearning_measurement(target, others, nnet.ModelSpec(8, (), 5), nnet.TrainConfig(0.1, 0, 10), 3, 100, aux, 0.01, 0)


def test_um_positive_across_seeds():
    positive = 0
    for s in range(20):
        target, others, aux = _sweep_inputs(derive_seed(5, s))
        try:
            build_unlearning_measurement(target, others, SPEC, CFG, 5, 100, aux, 0.01, s)
            positive += 1
        except CalibrationError:
            pass
    assert positive >= 18


def test_verify_volume_identity_and_config_check():
    target, others, aux = _sweep_inputs(3)
    spec = nnet.ModelSpec(8, (), 5)
    cfg = nnet.TrainConfig(0.5, 30, 10_000)
    um = build_unlearning_measurement(target, others, spec, cfg, 3, 100, aux, 0.01, 0)
    m = fit(others, spec, cfg, 0)
    est = verify_volume(m, m, um, aux, 0.01)
    assert est.ds == 0.0 and est.inferred_volume == 0
    with pytest.raises(InvalidInput):
        verify_volume(m, m, um, aux, 0.02)
    with pytest.raises(InvalidInput):
        verify_volume(m, m, um, AuxiliaryData.sample(aux.per_class[0], [0], 10, 0), 0.01)


def test_volume_estimate_tracks_removed_volume():
    target, others, aux = _sweep_inputs(7)
    spec = nnet.ModelSpec(8, (), 5)
    cfg = nnet.TrainConfig(1.0, 300, 100_000)
    data = target.select(target.ids[:1000])
    train = concat([data, others])
    um = build_unlearning_measurement(data, others, spec, cfg, 5, 100, aux, 0.01, 11, base_volume=500)
    req = UnlearnRequest({0: frozenset(int(i) for i in data.ids[:300])})
    out = retrain_unlearn(train, req, spec, cfg, 11)
    est = verify_volume(out.model_o, out.model_u, um, aux, 0.01)
    assert est.ds > 0
    assert deviation(300, est.inferred_volume) <= 0.5
    assert est.inferred_volume == math.ceil(est.ds / um.um_batch) * 100
