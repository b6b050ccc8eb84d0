"""Run configuration: sectioned INI files with a fixed, typed key set.

Unknown sections or keys are rejected so that a typo never silently falls
back to a default.  The resolved configuration (defaults filled in) can be
written back out and re-read to reproduce a run exactly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
import io

from .calibration import LeverArm, lever_arm_from_sidebands
from .dissipation import PhononBath
from .errors import ValidationError
from .hamiltonian import DeviceParams
from .rwa import DriveParams
from .spectra import REFERENCE_DEVICE, ScanSpec

REQUIRED = object()
AUTO = "auto"


def _float_list(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _threads(text):
    return AUTO if text.strip().lower() == AUTO else int(text)


def _auto_float(text):
    return AUTO if text.strip().lower() == AUTO else float(text)


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_dev = REFERENCE_DEVICE
SCHEMA = {
    "run": {"seed": (int, 0), "threads": (_threads, 1)},
    "device": {
        "g_abs": (float, _dev.g_abs), "t_c": (float, _dev.t_c), "t_so_y": (_auto_float, AUTO),
        "t_so_z": (float, _dev.t_so_z), "b0": (float, _dev.b0), "dBx_perp": (float, _dev.dBx_perp),
        "dBy_perp": (float, _dev.dBy_perp), "dB_par": (float, _dev.dB_par),
    },
    "bath": {
        "temperature": (float, 0.1), "coupling_eta": (_auto_float, AUTO), "cutoff_ueV": (_auto_float, AUTO),
        "exponent_p": (int, 3), "dephasing_rate": (_auto_float, AUTO), "spin_dephasing_rate": (_auto_float, AUTO),
    },
    "drive": {
        "nu": (float, 11.0), "omega": (_auto_float, 0.5),
        "amplitude_mV": (_auto_float, AUTO), "omega_per_mV": (_auto_float, AUTO),
    },
    "levels": {"B": (float, REQUIRED), "epsilon_min": (float, -60.0), "epsilon_max": (float, 150.0),
               "n_points": (int, 211)},
    "scan": {
        "epsilon_min": (float, -60.0), "epsilon_max": (float, 150.0), "epsilon_count": (int, 150),
        "axis": (str, "B"), "axis_min": (float, 0.0), "axis_max": (float, 3.0), "axis_count": (int, 100),
        "fixed_B": (float, 2.0), "locate_peaks": (_bool, False),
    },
    "calibration": {
        "pulse_mV": (float, REQUIRED), "sideband_spacing_mV": (float, REQUIRED), "sideband_nu": (_auto_float, AUTO),
        "first_guess_mV": (_auto_float, AUTO), "half_width_mV": (_auto_float, AUTO),
    },
    "fit": {"nu": (float, 20.0), "g_abs": (float, 0.382), "starts": (int, 5), "resolution": (float, 1e-3)},
    "mechanism": {
        "sigma_nm": (_float_list, "33.7"), "a_nm": (_float_list, "75"), "lambda_so_um": (_float_list, "10"),
        "theta_rad": (_float_list, "0"), "alpha": (float, 0.6), "beta": (float, 0.8),
        "A_ueV": (float, 100.0), "N": (float, 4e6), "field_direction": (_float_list, "1,0,0"),
        "E0_ueV": (float, 1000.0), "d_nm": (float, 75.0),
    },
    "synth": {
        "kind": (str, "plus"), "B_min": (float, 1.5), "B_max": (float, 3.0), "count": (int, 15),
        "nu": (float, 20.0), "noise": (float, 0.0), "scenario": (str, "singlet"),
        "gamma_s": (float, 5e-4), "tau_ns": (_float_list, "1000,2000,5000,10000"),
    },
}

# sections whose REQUIRED keys must be present for each subcommand
NEEDS = {"levels": ("levels",), "calibrate": ("calibration",)}


@dataclass
class RunConfig:
    values: dict  # section -> key -> parsed value
    text: dict  # section -> key -> canonical string (for the echo)

    def section(self, name):
        return self.values[name]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    @property
    def threads(self):
        return self.values["run"]["threads"]

    def device(self) -> DeviceParams:
        d = dict(self.values["device"])
        if d["t_so_y"] == AUTO:
            d["t_so_y"] = None
        return DeviceParams(**d)

    def bath(self) -> PhononBath:
        kw = {k: v for k, v in self.values["bath"].items() if v != AUTO}
        return PhononBath(**kw)

    def drive(self) -> DriveParams:
        d = self.values["drive"]
        omega = d["omega"]
        if d["amplitude_mV"] != AUTO:
            if d["omega_per_mV"] == AUTO:
                raise ValidationError("drive.amplitude_mV needs drive.omega_per_mV")
            omega = d["amplitude_mV"] * d["omega_per_mV"]
        if omega == AUTO:
            raise ValidationError("drive.omega is not set")
        return DriveParams(nu=d["nu"], omega=omega)

    def scan(self) -> ScanSpec:
        s = self.values["scan"]
        return ScanSpec(
            epsilon_range=(s["epsilon_min"], s["epsilon_max"], s["epsilon_count"]),
            axis=s["axis"], axis_range=(s["axis_min"], s["axis_max"], s["axis_count"]),
            fixed_B=s["fixed_B"], drive=self.drive(), bath=self.bath(), device=self.device(),
        )

    def lever_arm(self) -> LeverArm:
        c = self.values["calibration"]
        nu = self.values["drive"]["nu"] if c["sideband_nu"] == AUTO else c["sideband_nu"]
        return lever_arm_from_sidebands(c["sideband_spacing_mV"], nu)

    def require(self, command):
        for sec in NEEDS.get(command, ()):
            for key, value in self.values[sec].items():
                if value is REQUIRED:
                    raise ValidationError(f"missing required key [{sec}] {key}")

    def resolved_text(self):
        """INI text of every key with its resolved value; re-reading it reproduces the run."""
        out = io.StringIO()
        for sec in SCHEMA:
            out.write(f"[{sec}]\n")
            for key in SCHEMA[sec]:
                if (sec, key) == ("run", "threads"):
                    continue  # the worker count never changes results
                value = self.text[sec][key]
                if value is None:
                    out.write(f"# {key} = (required, not set)\n")
                else:
                    out.write(f"{key} = {value}\n")
            out.write("\n")
        return out.getvalue()


def _canonical(value):
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def parse_config(text: str = "", overrides: dict | None = None) -> RunConfig:
    """Parse INI text against the schema; ``overrides`` maps (section, key) to strings."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from exc
    raw = {sec: dict(parser[sec]) for sec in parser.sections()}
    for (sec, key), val in (overrides or {}).items():
        raw.setdefault(sec, {})[key] = str(val)

    values, texts = {}, {}
    for sec, keys in raw.items():
        if sec not in SCHEMA:
            raise ValidationError(f"unknown config section [{sec}]")
        for key in keys:
            if key not in SCHEMA[sec]:
                raise ValidationError(f"unknown config key [{sec}] {key}")
    for sec, keys in SCHEMA.items():
        values[sec], texts[sec] = {}, {}
        for key, (conv, default) in keys.items():
            given = raw.get(sec, {}).get(key)
            if given is None:
                if default is REQUIRED:
                    values[sec][key] = REQUIRED
                    texts[sec][key] = None
                    continue
                given = default if isinstance(default, str) else _canonical(default)
            try:
                v = conv(given)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"bad value for [{sec}] {key}: {given!r} ({exc})") from exc
            values[sec][key] = v
            texts[sec][key] = _canonical(v)
    cfg = RunConfig(values, texts)
    # construct the domain objects once so invalid values fail before any run
    cfg.device()
    cfg.bath()
    cfg.drive()
    if cfg.values["scan"]["axis"] not in ("B", "omega"):
        raise ValidationError("scan.axis must be 'B' or 'omega'")
    return cfg


def load_config(path=None, overrides=None) -> RunConfig:
    text = ""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
