"""INI configuration bundles and the objects built from them.

Sections mirror the parameter types. ``--set section.key=value`` overrides
are applied on top of the file before anything is built.
"""

import configparser
import hashlib
import io
import os
from importlib import resources

import numpy as np

from . import coupling as cpl
from .distributions import bin_to_grid, ensemble_density
from .dynamics import max_stable_dt
from .echo import EchoSimulation, PulseSpec, build_2pe
from .params import BiExp, CavityParams, DecoherenceSpec, DistributionSpec, NVParams, ValidationError
from .units import TWO_PI, UnitError, drive_amplitude, parse_quantity

PRESETS = ("default",)


class ConfigError(ValueError):
    """Unreadable or inconsistent configuration."""


def preset_path(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return str(resources.files("nvecho") / "data" / f"{name}.ini")


def parse_override(text):
    """Split ``"section.key=value"`` into its three parts."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} lacks '='")
    lhs, value = text.split("=", 1)
    if "." not in lhs:
        raise ConfigError(f"override {text!r} must name section.key")
    section, key = lhs.strip().split(".", 1)
    return section.strip(), key.strip(), value.strip()


class Config:
    """Parsed configuration with typed accessors.

    Parameters
    ----------
    path : str
        INI file, or ``preset:<name>`` for a bundled preset.
    overrides : sequence of str
        ``section.key=value`` entries applied in order.
    """

    def __init__(self, path, overrides=()):
        if path.startswith("preset:"):
            path = preset_path(path.split(":", 1)[1])
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        self.path = path
        self.parser = configparser.ConfigParser(inline_comment_prefixes=None)
        self.parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                self.parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        self.overrides = {}
        for text in overrides:
            section, key, value = parse_override(text)
            if not self.parser.has_section(section):
                raise ConfigError(f"override names unknown section {section!r}")
            self.parser.set(section, key, value)
            self.overrides[f"{section}.{key}"] = value

    # -- raw access ---------------------------------------------------------

    def text(self):
        """Canonical dump: sections and keys sorted."""
        out = io.StringIO()
        for s in sorted(self.parser.sections()):
            out.write(f"[{s}]\n")
            for k in sorted(self.parser[s]):
                out.write(f"{k} = {self.parser[s][k]}\n")
        return out.getvalue()

    def hash(self):
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()

    def raw(self, section, key, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if default is None:
            raise ConfigError(f"missing {section}.{key}")
        return default

    def has(self, section, key):
        return self.parser.has_option(section, key) and self.parser.get(section, key).strip() != ""

    def quantity(self, section, key, dimension, default=None, omega=None):
        text = self.raw(section, key, default)
        try:
            return parse_quantity(text, dimension, omega=omega)
        except UnitError as exc:
            raise ValidationError(f"{section}.{key}", str(exc)) from None

    def number(self, section, key, default=None):
        return self.quantity(section, key, "dimensionless", default)

    def integer(self, section, key, default=None):
        text = self.raw(section, key, default)
        try:
            return int(text)
        except ValueError:
            raise ValidationError(f"{section}.{key}", f"not an integer: {text!r}") from None

    def boolean(self, section, key, default=None):
        text = self.raw(section, key, default).lower()
        if text in ("1", "yes", "true", "on"):
            return True
        if text in ("0", "no", "false", "off"):
            return False
        raise ValidationError(f"{section}.{key}", f"not a boolean: {text!r}")

    def floats(self, section, key, scale=1.0):
        text = self.raw(section, key)
        try:
            return np.array([float(u) for u in text.replace(",", " ").split()]) * scale
        except ValueError:
            raise ValidationError(f"{section}.{key}", f"not a list of numbers: {text!r}") from None

    def auto(self, section, key, dimension):
        """Quantity, or None when the entry reads ``auto`` or is absent."""
        text = self.raw(section, key, "auto")
        if text.lower() == "auto":
            return None
        return self.quantity(section, key, dimension)

    # -- domain objects -----------------------------------------------------

    def cavity(self):
        return CavityParams.from_Q(self.quantity("cavity", "f_c", "angular"), self.number("cavity", "Q"),
                                   eta=self.number("cavity", "eta", "0.29"),
                                   Z0=self.quantity("cavity", "Z0", "resistance", "26"))

    def nv(self):
        base = NVParams()
        return NVParams(D=self.quantity("nv", "D", "angular", repr(base.D)),
                        A_hf=self.quantity("nv", "A_hf", "angular", repr(base.A_hf)),
                        Q_nuc=self.quantity("nv", "Q_nuc", "angular", repr(base.Q_nuc)))

    def distribution_spec(self):
        s = "distributions"
        return DistributionSpec(db0=self.quantity(s, "db0", "field"), dD0=self.quantity(s, "dD0", "angular"),
                                E1=self.quantity(s, "E1", "angular"), E2=self.quantity(s, "E2", "angular"),
                                A1=self.number(s, "A1"), omega_min=self.quantity(s, "f_min", "angular"),
                                omega_max=self.quantity(s, "f_max", "angular"),
                                n_omega=self.integer(s, "n_omega"), n_panels=self.integer(s, "n_panels", "128"))

    def B_NV(self):
        return self.quantity("distributions", "B_NV", "field", "0")

    def decoherence(self):
        s = "decoherence"
        gpar = self.quantity(s, "gamma_par", "angular", "0")
        biexp = None
        if self.has(s, "T2A"):
            biexp = BiExp(self.quantity(s, "T2A", "time"), self.quantity(s, "T2B", "time"), self.number(s, "A"),
                          self.number(s, "B"))
        return DecoherenceSpec.from_T2(self.quantity(s, "T2", "time"), gamma_par=gpar, biexp=biexp)

    def geometry(self):
        s = "coupling"
        return cpl.MeanderGeometry(n_strips=self.integer(s, "n_strips"),
                                   strip_width=self.quantity(s, "strip_width", "length"),
                                   pitch=self.quantity(s, "pitch", "length"),
                                   active_length=self.quantity(s, "active_length", "length"),
                                   gap=self.quantity(s, "gap", "length"))

    def field_map(self):
        cavity = self.cavity()
        source = self.raw("coupling", "source", "analytic")
        if source == "analytic":
            return cpl.analytic_wire_field(self.geometry(), cavity)
        path = source if os.path.isabs(source) else os.path.join(os.path.dirname(self.path), source)
        if not os.path.isfile(path):
            raise ConfigError(f"field map not found: {path}")
        return cpl.load_field_map(path, current=cpl.single_photon_current(cavity))

    def coupling_density(self, measured=True):
        """First-principles coupling density, rescaled to the measured g_ens if configured."""
        s = "coupling"
        cd = cpl.coupling_density(self.field_map(), self.quantity(s, "concentration", "density"), self.nv(),
                              n_psi=self.integer(s, "n_psi", "64"), M_g=self.integer(s, "M_g", "21"))
        if measured and self.has(s, "g_ens_measured"):
            cd = cpl.rescale_to_measured(cd, self.quantity(s, "g_ens_measured", "angular"),
                                     self.number(s, "polarization", "1"))
        return cd

    def density(self):
        return ensemble_density(self.B_NV(), self.distribution_spec(), self.nv())

    def grid(self, density=None, coupling=None):
        density = self.density() if density is None else density
        coupling = self.coupling_density() if coupling is None else coupling
        span = self.auto("grid", "span", "angular")
        return bin_to_grid(density, self.integer("grid", "M_delta"), coupling, coupling.g_ens, span=span)

    def omega_drive(self):
        return self.quantity("sequence", "drive_frequency", "angular")

    def sequence(self, grid):
        """Two-pulse echo sequence, with the carrier detuned from the grid frame."""
        s = "sequence"
        wd = self.omega_drive()
        tunit = parse_quantity("1 " + self.raw(s, "theta_time_unit", "s"), "time")
        punit = parse_quantity("1 " + self.raw(s, "theta_phase_unit", "rad"), "angle")
        times = self.floats(s, "theta_times", tunit)
        phases = self.floats(s, "theta_phases", punit)
        if times.size != phases.size:
            raise ValidationError("sequence.theta_phases", "need one phase per stored pulse")
        dur = self.quantity(s, "theta_duration", "time")
        ramp = self.quantity(s, "ramp", "time", "10e-9")
        amp = drive_amplitude(self.number(s, "theta_power"), wd)
        thetas = [PulseSpec(t, dur, amp, p, ramp) for t, p in zip(times, phases)]
        refocus = PulseSpec(self.quantity(s, "refocus_time", "time"), self.quantity(s, "refocus_duration", "time"),
                            drive_amplitude(self.number(s, "refocus_power"), wd),
                            self.quantity(s, "refocus_phase", "angle"), ramp)
        return build_2pe(thetas, refocus, detuning=wd - grid.omega_s)

    def simulation(self, grid):
        cavity = self.cavity()
        dt = self.auto("integrator", "dt", "time")
        dt = max_stable_dt(grid, cavity) if dt is None else dt
        backend = self.raw("integrator", "backend", "auto")
        return EchoSimulation(grid, cavity, self.decoherence(), dt, p_prime=self.number("integrator", "p_prime", "1"),
                              backend=None if backend == "auto" else backend,
                              tail=self.quantity("integrator", "tail", "time", "0.5e-6"))

    def echo_options(self):
        return dict(window=self.auto("echo", "window", "time"), phase_window=self.auto("echo", "phase_window", "time"),
                    subtract_reference=self.boolean("echo", "subtract_reference", "yes"))


def frequency_axis(cfg, section):
    """Uniform angular-frequency axis from ``f_min``, ``f_max`` and ``n``."""
    lo = cfg.quantity(section, "f_min", "angular")
    hi = cfg.quantity(section, "f_max", "angular")
    n = cfg.integer(section, "n")
    if not hi > lo or n < 2:
        raise ValidationError(f"{section}.f_max", "axis needs f_max > f_min and n >= 2")
    return np.linspace(lo, hi, n)


def hz(omega):
    return np.asarray(omega) / TWO_PI

