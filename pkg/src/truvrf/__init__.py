"""Sensitivity-based verification of machine unlearning on small numpy networks."""

from .adversary import ServerBehavior, apply_behavior
from .datasets import LabeledDataset, UnlearnRequest, gen_synthetic, load_dataset, load_idx, save_dataset
from .errors import CalibrationError, ConfigError, EmptyReport, FormatError, InfeasibleScenario, InvalidInput, TruvrfError
from .harness import BenchmarkReport, ScenarioConfig, TrialRecord, calibrate_tau, run_benchmark, run_sweep, run_trial
from .metrics import (
    ClassVerdict,
    SampleVerdict,
    UnlearningMeasurement,
    VolumeEstimate,
    build_unlearning_measurement,
    verify_class,
    verify_sample,
    verify_volume,
)
from .nnet import Model, ModelSpec, TrainConfig, init_model, load_model, save_model, train
from .sensitivity import AuxiliaryData, SensitivityProfile, extract_sensitivity
from .unlearning import SisaEnsemble, amnesiac_unlearn, retrain_unlearn, sisa_train, sisa_unlearn

__version__ = "0.1.0"
