"""Built-in test-model catalog backing the CLI and the acceptance suite.

Spans scalar and bivariate processes, Gaussian/Laplace/uniform/Student-t
innovations, AR/MA/ARMA/VAR structure, and a handful of recursive
systems.  Every entry is stable (and invertible where an MA part exists),
so the spectral one-step bound equals the innovation variance.
"""

from __future__ import annotations

import numpy as np

from .procgen import InnovationSpec, ProcessModel, RecursiveSpec


def _scalar(ar=(), ma=(), family="gaussian", variance=1.0, nu=None, name=""):
    return ProcessModel(
        ar_coeffs=tuple(np.array([[a]]) for a in ar),
        ma_coeffs=tuple(np.array([[b]]) for b in ma),
        innovation=InnovationSpec(family=family, variance=variance, nu=nu),
        name=name,
    )


def _var1(A, sigma, name=""):
    return ProcessModel(
        ar_coeffs=(np.asarray(A, dtype=float),),
        innovation=InnovationSpec(cross_covariance=np.asarray(sigma, dtype=float)),
        name=name,
    )


def process_models() -> dict[str, ProcessModel]:
    models = {
        "white_gaussian": _scalar(),
        "white_gaussian_var4": _scalar(variance=4.0),
        "ar1_gaussian": _scalar(ar=(0.5,)),
        "ar1_fast_gaussian": _scalar(ar=(0.9,)),
        "ar1_neg_gaussian": _scalar(ar=(-0.6,)),
        "ar2_gaussian": _scalar(ar=(0.5, -0.3)),
        "ma1_gaussian": _scalar(ma=(0.5,)),
        "ma2_gaussian": _scalar(ma=(0.4, 0.2)),
        "arma11_gaussian": _scalar(ar=(0.5,), ma=(0.3,), variance=2.0),
        "iid_laplace": _scalar(family="laplace"),
        "iid_uniform": _scalar(family="uniform"),
        "ar1_student_t": _scalar(ar=(0.5,), family="student_t", nu=5.0),
        "ma1_laplace": _scalar(ma=(0.5,), family="laplace"),
        "bivariate_white": ProcessModel(
            innovation=InnovationSpec(cross_covariance=np.array([[1.0, 0.3],
                                                                 [0.3, 1.0]]))),
        "var1_gaussian": _var1([[0.5, 0.1], [0.0, 0.3]], np.eye(2)),
        "var1_correlated": _var1([[0.4, 0.05], [0.0, 0.25]],
                                 [[1.0, 0.3], [0.3, 1.0]]),
        "var1_rotating": _var1([[0.2, -0.3], [0.1, 0.5]],
                               [[0.8, 0.2], [0.2, 1.2]]),
    }
    for name, model in models.items():
        object.__setattr__(model, "name", name)
    return models


def recursive_specs() -> dict[str, RecursiveSpec]:
    specs = {
        "rec_diff_zero_2d": RecursiveSpec(
            g_form="difference", f_form="zero",
            noise=InnovationSpec(cross_covariance=np.eye(2))),
        "rec_diff_linear": RecursiveSpec(
            g_form="difference", f_form="linear", gain=np.array([[-0.5]])),
        "rec_identity_zero": RecursiveSpec(g_form="identity", f_form="zero"),
        "rec_identity_linear": RecursiveSpec(
            g_form="identity", f_form="linear", gain=np.array([[0.5]])),
        "rec_second_diff_saturated": RecursiveSpec(
            g_form="second_difference", f_form="saturated_linear",
            gain=np.array([[-0.1]]), cap=0.5),
        "rec_diff_cap0": RecursiveSpec(
            g_form="difference", f_form="saturated_linear",
            gain=np.array([[-0.5]]), cap=0.0),
        "rec_diff_laplace": RecursiveSpec(
            g_form="difference", f_form="zero",
            noise=InnovationSpec(family="laplace")),
    }
    for name, spec in specs.items():
        object.__setattr__(spec, "name", name)
    return specs


def scalar_arma_names() -> list[str]:
    return [n for n, m in process_models().items() if m.dim == 1]


def var1_names() -> list[str]:
    return [n for n, m in process_models().items() if m.dim > 1 and m.p == 1]


def get_model(name: str) -> ProcessModel:
    models = process_models()
    if name not in models:
        raise KeyError(f"unknown catalog model {name!r}; known: {sorted(models)}")
    return models[name]


def get_recursive(name: str) -> RecursiveSpec:
    specs = recursive_specs()
    if name not in specs:
        raise KeyError(f"unknown recursive spec {name!r}; known: {sorted(specs)}")
    return specs[name]
