"""Classical statistical mechanics on the tangent bundle.

Coordinates are (qtilde, q) pairs with qtilde the imaginary-time velocity;
the total energy of a state is E = sum(qtilde**2)/2 + V(q) and the
imaginary-time Lagrangian is L = -E. The toolkit integrates the associated
first-order flow, verifies its area preservation, and builds microcanonical
and canonical ensembles directly on the tangent bundle, with a phase-space
(Hamiltonian) cross-check.

Hot loops (flow integration, tangent maps, Metropolis walks) run in a
compiled extension when available and in a bit-identical pure-Python
fallback otherwise; ``tangentstat.BACKEND`` names the active one.
"""

from ._kernels import BACKEND
from .model import (Observable, PotentialSpec, SystemSpec, TangentPoint,
                    UnitsConfig, hamiltonian_eval, lagrange_bracket,
                    lagrangian_eval, potential_eval, potential_grad)
from .dynamics import (TangentPolygon, Trajectory, area_evolution,
                       density_along_flow, energy_drift, flow_step, integrate,
                       jacobian_determinant, shoelace_area)
from .microcanonical import (IntegrationDomain, MicroResult, compose_systems,
                             entropy_micro, shell_density, temperature_micro,
                             volume_below)
from .canonical import (CanonicalSamples, ChainConfig, EnsembleEstimate,
                        EquivalenceResult, InverseTemperature, ThermoResult,
                        boltzmann_weight, ensemble_average,
                        hamiltonian_equivalence, partition_function,
                        sample_canonical, thermodynamics)
from .experiments import (CloudSpec, ExperimentReport, bath_emergence,
                          ensemble_average_evolution, ho_reference,
                          zeroth_law_contact)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "__version__",
    # model
    "Observable", "PotentialSpec", "SystemSpec", "TangentPoint", "UnitsConfig",
    "hamiltonian_eval", "lagrange_bracket", "lagrangian_eval",
    "potential_eval", "potential_grad",
    # dynamics
    "TangentPolygon", "Trajectory", "area_evolution", "density_along_flow",
    "energy_drift", "flow_step", "integrate", "jacobian_determinant",
    "shoelace_area",
    # microcanonical
    "IntegrationDomain", "MicroResult", "compose_systems", "entropy_micro",
    "shell_density", "temperature_micro", "volume_below",
    # canonical
    "CanonicalSamples", "ChainConfig", "EnsembleEstimate", "EquivalenceResult",
    "InverseTemperature", "ThermoResult", "boltzmann_weight",
    "ensemble_average", "hamiltonian_equivalence", "partition_function",
    "sample_canonical", "thermodynamics",
    # experiments
    "CloudSpec", "ExperimentReport", "bath_emergence",
    "ensemble_average_evolution", "ho_reference", "zeroth_law_contact",
]
