"""JSON schemas for configs and results used by the CLI.

Experiment config layout:

    {
      "lattice":   {"depth": 18.0, "lattice_constant": 9.3e-7, ...},
      "noise":     {"dephasing_mode": "fixed_lambda", "lambda_per_period": 0.64,
                    "filter_purity": 0.95, "q_samples": 64},
      "operation": {"kind": "free_period", "periods": 1.0},
      "shots": 10000,
      "seed": 1
    }

Operation kinds: free_period, sine_drive, cosine_drive, planted_dephasing,
planted_rotation, planted_choi, and composition (factors listed outermost
first, i.e. applied last).
"""

from __future__ import annotations

import json

from .channels import ChoiMatrix, compose, dephasing_channel, rotation_channel
from .lattice import LatticeConfig
from .sim import NoiseModel, Operation, SequenceError


def lattice_from_json(obj: dict) -> LatticeConfig:
    if "depth" not in obj:
        raise SequenceError("lattice config needs a 'depth' entry")
    kwargs = {k: obj[k] for k in ("depth", "lattice_constant", "recoil_energy",
                                  "atom_mass", "gravity", "plane_wave_cutoff",
                                  "q_grid_size") if k in obj}
    return LatticeConfig(**kwargs)


def lattice_to_json(config: LatticeConfig) -> dict:
    return {"depth": config.depth,
            "lattice_constant": config.lattice_constant,
            "recoil_energy": config.recoil_energy,
            "atom_mass": config.atom_mass,
            "gravity": config.gravity,
            "plane_wave_cutoff": config.plane_wave_cutoff,
            "q_grid_size": config.q_grid_size}


def operation_choi_from_json(obj: dict, config: LatticeConfig,
                             noise: NoiseModel):
    """Resolve an operation block to (Operation, optional planted choi)."""
    kind = obj.get("kind")
    if kind in ("free_period",):
        return Operation.free_period(periods=obj.get("periods", 1.0))
    if kind in ("sine_drive", "cosine_drive"):
        return Operation.drive(kind.split("_")[0],
                               amplitude=obj.get("amplitude", 26e-9),
                               periods=obj.get("periods", 1.0))
    if kind == "planted_dephasing":
        return Operation.planted(dephasing_channel(obj["coherence_factor"]))
    if kind == "planted_rotation":
        return Operation.planted(rotation_channel(obj["axis"], obj["angle_deg"]))
    if kind == "planted_choi":
        return Operation.planted(ChoiMatrix.from_json(obj["choi"]))
    if kind == "composition":
        factors = [operation_choi_from_json(f, config, noise)
                   for f in obj["factors"]]
        chois = []
        from .sim import operation_channel
        for f in factors:
            chois.append(operation_channel(f, config, noise))
        total = chois[-1]
        for c in reversed(chois[:-1]):
            total = compose(c, total)
        return Operation.planted(total)
    raise SequenceError(f"unknown operation kind {kind!r}")


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
