"""blochlab: numerical Floquet-Bloch laboratory for periodic Schrodinger
operators.

Band structures and gaps from the plane-wave Bloch Hamiltonian, the Hill
discriminant as an independent 1D oracle, real/complex Fermi varieties of
the Bloch determinant, the discrete Floquet transform with its decay/growth
correspondence, and finite-box experiments on impurity and embedded
eigenvalues.
"""

__version__ = "0.1.0"

from . import band_structure, cli, errors, fermi, floquet_transform, hill
from . import perturbed, plane_wave, potential
from .band_structure import (BandStructure, BrillouinGrid, band_functions,
                             extract_bands, in_spectrum)
from .errors import (ConstructionFailure, IntegrationFailure, NumericalFailure,
                     ProbeFailure, ResolutionFailure, TruncationDominated)
from .fermi import (ComplexLineProbe, FermiTrace, complex_zero_count,
                    component_report, polish_zeros, separable_cross_check,
                    trace_real)
from .floquet_transform import (CellArray, FloquetField, diagonalization_residual,
                                forward, forward_field, growth_order_probe,
                                inverse)
from .hill import (DiscriminantModel, Monodromy, bands_1d, discriminant,
                   discriminant_scan, floquet_exponent, monodromy)
from .perturbed import (BoxProblem, EigReport, Impurity, decay_fit, discretize,
                        eigs_in_window, gaussian_impurity, make_wvn,
                        stability_scan)
from .plane_wave import BlochMatrix, PlaneWaveBasis, assemble, hermitian_spectrum, log_det
from .potential import (FourierPotential, SeparablePotential, evaluate,
                        from_samples, make_potential, tensor_sum)
