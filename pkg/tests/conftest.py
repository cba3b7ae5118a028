import numpy as np
import pytest

from platoon_mss.lti import RationalTF
from platoon_mss.strategies import VehicleSpec


def integrator_plant(gain=1.0):
    return RationalTF([gain], [1.0, -1.0])


def family_controller(lead_gain, zero, pole, h):
    """Third-order lead controller z(z - zero) over (z-1)(z - pole)(z - h/(1+h)).

    The last pole cancels the zero of the headway filter by construction.
    """
    num = lead_gain * np.polymul([1.0, 0.0], [1.0, -zero])
    den = np.polymul(np.polymul([1.0, -1.0], [1.0, -pole]), [1.0, -h / (1.0 + h)])
    return RationalTF(num, den)


def homogeneous_vehicle_spec(strategy="error_hold_control_hold", h=4.0):
    """The ten-follower reference design used across the studies."""
    return VehicleSpec(
        plant=integrator_plant(1.0),
        controller=family_controller(0.27, 0.88, -0.79, h),
        headway=h,
        strategy=strategy,
    )


def two_follower_specs(strategy="error_hold_control_hold"):
    """The heterogeneous two-follower pair (first, second)."""
    h = 3.8
    first = VehicleSpec(
        plant=integrator_plant(1.0),
        controller=RationalTF([1.0 / (1.0 + h), 0.0], np.polymul([1.0, -1.0], [1.0, 0.7])),
        headway=h,
        strategy=strategy,
    )
    second = VehicleSpec(
        plant=integrator_plant(1.2),
        controller=RationalTF([1.33 / (1.0 + h), 0.0], np.polymul([1.0, -1.0], [1.0, 0.88])),
        headway=h,
        strategy=strategy,
    )
    return first, second


def random_family_spec(rng, strategy=None, h=4.0):
    """A conforming random draw from the heterogeneous design family."""
    if strategy is None:
        strategy = rng.choice(["error_to_zero", "error_hold_control_hold",
                               "measurement_estimate", "measurement_hold"])
    return VehicleSpec(
        plant=integrator_plant(rng.uniform(0.85, 1.25)),
        controller=family_controller(
            rng.uniform(0.24, 0.3),
            rng.uniform(0.8, 0.95),
            -rng.uniform(0.7, 0.85),
            h,
        ),
        headway=h,
        strategy=str(strategy),
    )


@pytest.fixture
def homog_spec():
    return homogeneous_vehicle_spec()


@pytest.fixture
def follower_pair():
    return two_follower_specs()
