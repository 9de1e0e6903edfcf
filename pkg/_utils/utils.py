# NOTES:
# Small static helpers shared by the simulator: unit conversions and the seeding scheme.

import numpy as np
from numpy.typing import ArrayLike


class Utils:
    @staticmethod
    def db_to_linear(value_db: ArrayLike) -> np.ndarray | float:
        """Power ratio in dB to linear."""
        return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)

    @staticmethod
    def linear_to_db(value: ArrayLike) -> np.ndarray | float:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(np.asarray(value, dtype=float))

    @staticmethod
    def dbm_to_watts(value_dbm: float) -> float:
        return float(10.0 ** ((value_dbm - 30.0) / 10.0))

    @staticmethod
    def watts_to_dbm(value_w: float) -> float:
        return float(10.0 * np.log10(value_w) + 30.0)

    @staticmethod
    def gain_db_to_amplitude(gain_db: float) -> float:
        """Amplifier gain in dB (20 log10 of the amplitude) to the amplitude factor."""
        return float(10.0 ** (gain_db / 20.0))

    @staticmethod
    def rng_for(seed: int, *key: int) -> np.random.Generator:
        """
        Independent random stream addressed by (seed, key...).

        Streams are addressed by index rather than spawned in sequence, so
        adding drops or blocks never changes the draws of earlier ones.

        Example call: Utils.rng_for(7, drop, block + 1)
        """
        return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))
