import re

import numpy as np
import pytest

from uiobs import registry
from uiobs.analysis import analyze
from uiobs.canonization import (CanonizationError, _pivot_columns, canonize_general,
                                canonize_single, shortcut_outputs)
from uiobs.evaluation import evaluate
from uiobs.expr import Namespace, parse_expr
from uiobs.modelfile import parse_model_text
from uiobs.span import SamplePlan

PLAN = SamplePlan()

SPURIOUS = """state x y z
known_input u
unknown_input w1 w2
drift = y, 0, 0
f u = 0, 1, 0
g w1 = 0, 1, 0
g w2 = 0, 0, 1
output h = x
"""

SINGLE_SPURIOUS = """state x y z
known_input u
unknown_input w
drift = y, 0, 0
f u = 0, 1, 0
g w = 0, 0, 1
output h = x
"""


def model(name):
    return registry.get(name).model()


def test_pivot_columns_keep_input_order():
    A = np.array([[1.0, 5.0, 0.0], [0.0, 0.0, 1.0]])
    assert _pivot_columns(A, 2) == [0, 2]
    assert _pivot_columns(A, 1) == [0]
    assert _pivot_columns(A, 0) == []


def test_vio2d_calibrated_trace():
    c = canonize_general(model("vio2d-calibrated"), PLAN)
    assert c.d_trace == [1, 1, 2]
    assert len(c.augmentations) == 2
    assert c.h_labels == ["L_G(L_G(h))", "L_Ax(L_G(L_G(h)))"]
    assert c.model_out.state[-2:] == ("omega", "omega_dot")
    assert c.model_out.unknown_inputs == ("omega_dot_dot", "Ay")
    assert not c.spurious


def test_vio2d_coordinate_change_value():
    m = model("vio2d-calibrated")
    c = canonize_general(m, PLAN)
    (change,) = c.coordinate_changes
    assert change["changed_field"] == "Ay"
    text = change["w_tilde"]["omega_dot"]
    inner = re.fullmatch(r"omega_dot \+ \((.*)\)\*Ay", text).group(1)
    coeff = parse_expr(inner, Namespace(m.state, m.params))
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = dict(zip(m.state, rng.uniform(0.3, 2.0, m.n)))
        want = -np.cos(p["theta"] - p["phi"]) / p["r"]
        assert evaluate(coeff, p) == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_canonic_model_needs_no_change():
    m = model("vio3d-calibrated")
    c = canonize_general(m, PLAN)
    assert c.d_trace[0] <= m.m_w
    if c.d_trace == [m.m_w]:
        assert c.model_out is m and not c.transform_log


def test_spurious_input_is_dropped():
    m = parse_model_text(SPURIOUS, name="spurious")
    c = canonize_general(m, PLAN)
    assert c.spurious == ["w2"]
    assert c.d_trace == [0, 1, 1]
    # a round with d = 0 adds nothing and is not an augmentation
    assert len(c.augmentations) == 1
    assert c.model_out.state == ("x", "y", "z", "w1")
    assert "w2" not in c.model_out.unknown_inputs


def test_spurious_model_keeps_its_output_observable():
    m = parse_model_text(SPURIOUS, name="spurious")
    _, rep, _ = analyze(m, PLAN)
    assert rep.spurious == ["w2"]
    assert rep.verdicts == {"x": True, "y": True, "z": False, "w1": True}


def test_single_input_spurious():
    m = parse_model_text(SINGLE_SPURIOUS, name="single")
    c = canonize_single(m, PLAN)
    assert c.spurious == ["w"]
    assert c.model_out.m_w == 0


@pytest.mark.parametrize("name, label", [("unicycle-case1", "y"), ("vehicle3d", "h_u")])
def test_single_input_selection(name, label):
    c = canonize_single(model(name), PLAN)
    assert c.h_labels == [label] and not c.spurious


def test_canonize_single_rejects_two_inputs():
    with pytest.raises(ValueError):
        canonize_single(model("vio2d-calibrated"), PLAN)


def test_augmentation_budget():
    with pytest.raises(CanonizationError):
        canonize_general(model("vio2d-calibrated"), PLAN, max_aug=1)


def test_shortcut_outputs_speed():
    m = model("vio2d-uncalibrated")
    one = m.with_outputs(m.outputs[:1]).replace(symmetries=())
    cands = ["v_x^2 + v_y^2", "v_x", "x_v^2 + y_v^2"]
    ns = Namespace(m.state, m.params)
    exprs = [parse_expr(t, ns) for t in cands]
    assert shortcut_outputs(one, exprs, 1, PLAN) == []
    got = shortcut_outputs(one, exprs, 6, PLAN)
    assert exprs[0] in got and exprs[1] not in got


def test_shortcut_outputs_accept_outputs():
    m = model("unicycle-case1")
    h = m.outputs[0][1]
    assert shortcut_outputs(m, [h], 0, PLAN) == [h]
    assert shortcut_outputs(m, [h], 2, PLAN) == [h]
