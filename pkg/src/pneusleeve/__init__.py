"""Modelling and analysis toolkit for a two-degree-of-freedom soft pneumatic
shoulder sleeve built from fabric bending actuators."""

from .errors import (CapabilityExceeded, ConfigurationError, DomainError, FitFailure,
                     ParseError, SleeveError)
from .fitting import (FitReport, derive_reference_model, fit_torque_angle,
                      fit_torque_pressure, r_squared, reference_model)
from .models import (MODULES, VARIANTS, ActuatorVariant, AngleConvention, ModuleSpec,
                     TorqueModel, aa_torque_with_bb, free_bend_angle, get_variant,
                     off_axis_torque, predict_torque, torque_at_pressure,
                     torque_at_reference)
from .pneumatics import (ActuatorDynamics, RegulatorSpec, Waveform, dynamics_for,
                         regulator_command, rise_time, simulate_first_order,
                         square_wave, tau_from_rise_time)
from .signals import (EmgTrace, ImuTrace, MvcTable, TrialSet, emg_report, lowpass,
                      normalize_mvc, rectify, relative_reduction, rms_envelope,
                      segment_motion)
from .sleeve import (ArmParams, PressureSet, ShoulderPose, SleeveLayout,
                     allocate_pressures, default_layout, equilibrium_aoe,
                     gravity_torque, net_torque, pose_to_actuator_angles,
                     simulate_reach, support_fraction, workspace_grid)

__version__ = "0.1.0"
