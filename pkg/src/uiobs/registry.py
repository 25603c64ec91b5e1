"""Built-in example systems with their expected analysis results."""
from __future__ import annotations

from dataclasses import dataclass, field

from .modelfile import parse_model_text

_UNI_V = "cos(theta - phi), sin(theta - phi)/r, 0"
_UNI_W = "0, 0, 1"
_UNI_OUT = {"r": "r", "bearing": "theta - phi", "phi": "phi"}


def _unicycle(output, known):
    unknown = "v" if known == "omega" else "omega"
    fields = {"v": _UNI_V, "omega": _UNI_W}
    return f"""# planar vehicle in polar coordinates with one unknown input
state r phi theta
known_input {known}
unknown_input {unknown}
f {known} = {fields[known]}
g {unknown} = {fields[unknown]}
output y = {_UNI_OUT[output]}
"""


def _disturbance(output, gamma_known):
    outs = {
        "r": "x_v^2 + y_v^2",
        "beta": "(y_v - x_v*tan(theta))/(x_v + y_v*tan(theta))",
        "phi": "y_v/x_v",
    }
    if gamma_known:
        return f"""# planar vehicle pushed by a disturbance of known direction gamma
state x_v y_v theta
param gamma
known_input v omega
unknown_input w
f v = cos(theta), sin(theta), 0
f omega = 0, 0, 1
g w = cos(gamma), sin(gamma), 0
output y = {outs[output]}
"""
    return f"""# planar vehicle pushed by a disturbance of unknown constant direction gamma
state x_v y_v theta gamma
known_input v omega
unknown_input w
f v = cos(theta), sin(theta), 0, 0
f omega = 0, 0, 1, 0
g w = cos(gamma), sin(gamma), 0, 0
output y = {outs[output]}
"""


_ROT_X = "qt^2 + qx^2 - qy^2 - qz^2, 2*qt*qz + 2*qx*qy, 2*qx*qz - 2*qt*qy"
_ROT_Y = "2*qx*qy - 2*qt*qz, qt^2 - qx^2 + qy^2 - qz^2, 2*qt*qx + 2*qy*qz"
_ROT_Z = "2*qt*qy + 2*qx*qz, 2*qy*qz - 2*qt*qx, qt^2 - qx^2 - qy^2 + qz^2"


def _dot_r(col):
    a, b, c = [s.strip() for s in col.split(",")]
    return f"(x*({a}) + y*({b}) + z*({c}))"


def _vehicle3d(wind):
    head = "unknown_input w\n" if wind else ""
    g = "g w = 0, 0, 1, 0, 0, 0, 0\n" if wind else ""
    return f"""# aerial vehicle observing one point feature; body rates and air speed known
state x y z qt qx qy qz
known_input Ox Oy Oz Vx Vy Vz
{head}f Ox = 0, 0, 0, -qx/2, qt/2, qz/2, -qy/2
f Oy = 0, 0, 0, -qy/2, -qz/2, qt/2, qx/2
f Oz = 0, 0, 0, -qz/2, qy/2, -qx/2, qt/2
f Vx = {_ROT_X}, 0, 0, 0, 0
f Vy = {_ROT_Y}, 0, 0, 0, 0
f Vz = {_ROT_Z}, 0, 0, 0, 0
{g}output h_u = {_dot_r(_ROT_X)}/{_dot_r(_ROT_Z)}
output h_v = {_dot_r(_ROT_Y)}/{_dot_r(_ROT_Z)}
output h_const = qt^2 + qx^2 + qy^2 + qz^2
symmetry = -y, x, 0, -qz/2, -qy/2, qx/2, qt/2
"""


VIO2D_CALIBRATED = """# planar visual-inertial odometry, calibrated sensors; angular rate and
# lateral acceleration are unknown
state r phi v alpha theta
known_input Ax
unknown_input omega Ay
drift = v*cos(alpha - phi), v*sin(alpha - phi)/r, 0, 0, 0
f Ax = 0, 0, cos(alpha - theta), -sin(alpha - theta)/v, 0
g omega = 0, 0, 0, 0, 1
g Ay = 0, 0, sin(alpha - theta), cos(alpha - theta)/v, 0
output h = phi - theta
"""

VIO2D_CALIBRATED_CANONIC_SYMMETRY = "0, 1, 0, 1, 1, 0, 0"

_XC = "(x_v + rho*cos(theta + phi1))"
_YC = "(y_v + rho*sin(theta + phi1))"
_TC = "(theta + phi1 + phi2)"

VIO2D_UNCALIBRATED = f"""# planar visual-inertial odometry with unknown camera extrinsics and
# accelerometer bias B; the speed norm is added as an output
state x_v y_v v_x v_y theta B rho phi1 phi2
known_input Ax
unknown_input omega Ay
drift = v_x, v_y, B*cos(theta), B*sin(theta), 0, 0, 0, 0, 0
f Ax = 0, 0, cos(theta), sin(theta), 0, 0, 0, 0, 0
g omega = 0, 0, 0, 0, 1, 0, 0, 0, 0
g Ay = 0, 0, -sin(theta), cos(theta), 0, 0, 0, 0, 0
output tan_beta = ({_YC}*cos{_TC} - {_XC}*sin{_TC})/({_XC}*cos{_TC} + {_YC}*sin{_TC})
output speed2 = v_x^2 + v_y^2
symmetry = -y_v, x_v, -v_y, v_x, 1, 0, 0, 0, 0
"""

_GRAV = "-2*g*(qt*qy - qx*qz), 2*g*(qt*qx + qy*qz), g*(qt^2 - qx^2 - qy^2 + qz^2)"

VIO3D_CALIBRATED = f"""# visual-inertial odometry in 3D, calibrated; only the vertical body
# acceleration is measured, the other five inertial readings are unknown
state Fx Fy Fz Vx Vy Vz qt qx qy qz g
known_input Az
unknown_input Ox Oy Oz Ax Ay
drift = -Vx, -Vy, -Vz, {_GRAV}, 0, 0, 0, 0, 0
f Az = 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0
g Ox = 0, Fz, -Fy, 0, Vz, -Vy, -qx/2, qt/2, qz/2, -qy/2, 0
g Oy = -Fz, 0, Fx, -Vz, 0, Vx, -qy/2, -qz/2, qt/2, qx/2, 0
g Oz = Fy, -Fx, 0, Vy, -Vx, 0, -qz/2, qy/2, -qx/2, qt/2, 0
g Ax = 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0
g Ay = 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0
output Fx = Fx
output Fy = Fy
output Vx = Vx
output Vy = Vy
output Vz = Vz
output h_q = qt^2 + qx^2 + qy^2 + qz^2
symmetry = 0, 0, 0, 0, 0, 0, -qz, -qy, qx, qt, 0
"""

VIO3D_CALIBRATED_CAMERA = """output h_u = Fx/Fz
output h_v = Fy/Fz
output h_q = qt^2 + qx^2 + qy^2 + qz^2
"""

VIO3D_UNCALIBRATED = f"""# visual-inertial odometry in 3D with unknown camera position (Xc, Yc, Zc)
# and yaw offset gamma; five inertial readings unknown
state cFx cFy cFz Vx Vy Vz qt qx qy qz g Xc Yc Zc gamma
known_input Az
unknown_input Ox Oy Ax Ay Oz
drift = -Vx*cos(gamma) - Vy*sin(gamma), Vx*sin(gamma) - Vy*cos(gamma), -Vz, {_GRAV}, 0, 0, 0, 0, 0, 0, 0, 0, 0
f Az = 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0
g Ox = sin(gamma)*(cFz + Zc), cos(gamma)*(cFz + Zc), -Yc - cFy*cos(gamma) - cFx*sin(gamma), 0, Vz, -Vy, -qx/2, qt/2, qz/2, -qy/2, 0, 0, 0, 0, 0
g Oy = -cos(gamma)*(cFz + Zc), sin(gamma)*(cFz + Zc), Xc + cFx*cos(gamma) - cFy*sin(gamma), -Vz, 0, Vx, -qy/2, -qz/2, qt/2, qx/2, 0, 0, 0, 0, 0
g Ax = 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0
g Ay = 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0
g Oz = cFy + Yc*cos(gamma) - Xc*sin(gamma), -cFx - Xc*cos(gamma) - Yc*sin(gamma), 0, Vy, -Vx, 0, -qz/2, qy/2, -qx/2, qt/2, 0, 0, 0, 0, 0
output cFx = cFx
output cFy = cFy
output h3 = (Vy*cos(gamma) - Vx*sin(gamma))/(Vx*cos(gamma) + Vy*sin(gamma))
output h4 = Vx^2 + Vy^2
output Vz = Vz
output cFz = cFz
output h_q = qt^2 + qx^2 + qy^2 + qz^2
symmetry = 0, 0, 0, 0, 0, 0, -qz/2, -qy/2, qx/2, qt/2, 0, 0, 0, 0, 0
symmetry = 0, 0, 0, -Vy, Vx, 0, qz/2, -qy/2, qx/2, -qt/2, 0, -Yc, Xc, 0, 1
"""


@dataclass
class Example:
    name: str
    text: str
    description: str
    expect: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)   # passed on to analyze()

    def model(self):
        return parse_model_text(self.text, name=self.name)


def _registry():
    ex = {}
    cases = [("r", "omega"), ("r", "v"), ("bearing", "omega"),
             ("bearing", "v"), ("phi", "omega"), ("phi", "v")]
    ranks = [2, 2, 1, 2, 2, 3]
    for i, ((out, known), rk) in enumerate(zip(cases, ranks), start=1):
        exp = {"rank": rk}
        if i in (3, 5):
            exp["unobservable"] = ["r"]
        if i == 1:
            exp["m_star"] = 2
        if i == 4:
            exp["special_case"] = True
            exp["m_prime"] = 0
        if i == 6:
            exp["rank_at"] = {1: 3}
        ex[f"unicycle-case{i}"] = Example(
            f"unicycle-case{i}", _unicycle(out, known),
            f"unicycle, output {_UNI_OUT[out]}, known input {known}", exp)
    for out, full_unknown in (("r", 3), ("beta", 3), ("phi", 4)):
        ex[f"disturbance-known-{out}"] = Example(
            f"disturbance-known-{out}", _disturbance(out, True),
            f"disturbed unicycle, known direction, output {out}",
            {"rank": 3, "fully_observable": True})
        exp = {"rank": full_unknown, "fully_observable": full_unknown == 4}
        if out == "r":
            exp["observable"] = []
        ex[f"disturbance-unknown-{out}"] = Example(
            f"disturbance-unknown-{out}", _disturbance(out, False),
            f"disturbed unicycle, unknown direction, output {out}", exp)
    ex["vehicle3d"] = Example("vehicle3d", _vehicle3d(True), "aerial vehicle with vertical wind",
                              {"rank": 6, "special_case": True, "rank_at": {0: 3, 2: 6},
                               "m_star": 2, "symmetries": True})
    ex["vehicle3d-nowind"] = Example("vehicle3d-nowind", _vehicle3d(False),
                                     "aerial vehicle without wind", {"rank": 4})
    ex["vio2d-calibrated"] = Example(
        "vio2d-calibrated", VIO2D_CALIBRATED, "planar visual-inertial odometry, calibrated",
        {"augmentations": 2, "ranks": [2, 3, 6, 6], "rank": 6, "m_prime": 2,
         "canonic_symmetry": VIO2D_CALIBRATED_CANONIC_SYMMETRY})
    ex["vio2d-uncalibrated"] = Example(
        "vio2d-uncalibrated", VIO2D_UNCALIBRATED, "planar visual-inertial odometry, uncalibrated",
        {"ranks": [2, 3, 7, 8, 8], "rank": 8, "m_prime": 3, "symmetries": True})
    ex["vio3d-calibrated"] = Example(
        "vio3d-calibrated", VIO3D_CALIBRATED, "visual-inertial odometry in 3D, calibrated",
        {"rank_at": {0: 6, 2: 8, 3: 10, 4: 10}, "rank": 10, "symmetries": True,
         "t_zero_slab": True})
    ex["vio3d-uncalibrated"] = Example(
        "vio3d-uncalibrated", VIO3D_UNCALIBRATED, "visual-inertial odometry in 3D, uncalibrated",
        {"rank_at": {0: 7, 1: 7, 2: 10, 3: 13, 4: 13}, "rank": 13, "t_nonzero": 63,
         "symmetries": True},
        {"hold_extra_outputs": True})
    return ex


EXAMPLES = _registry()


def names():
    return list(EXAMPLES)


def get(name) -> Example:
    try:
        return EXAMPLES[name]
    except KeyError:
        raise KeyError(f"unknown example '{name}'; known: {', '.join(EXAMPLES)}") from None
