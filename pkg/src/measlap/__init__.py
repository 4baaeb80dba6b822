"""Measurable graph Laplacians and reversible Markov operators on finite discretizations.

The package is organised bottom-up:

``measlap.model``
    symmetric measures, degrees, ``nu``, partition graphs.
``measlap.operators``
    R, R-tilde, Delta, P, spectra, harmonic functions.
``measlap.semigroups``
    Poisson and heat semigroups, Green's operator, Riesz decomposition.
``measlap.energy``
    energy space identities, Royden split, symmetric pair (J, K).
``measlap.paths``
    path measures, seeded sampling, dissipation space.
``measlap.reports``
    suite configuration, report records and the suite runner.
"""

from .errors import *  # noqa: F401,F403
from .model import (
    ConnectivityWarning,
    DiscretizedMeasureSpace,
    IndexSet,
    KernelSpec,
    PartitionGraph,
    SymmetricMeasureModel,
    build_model,
    build_partition_graph,
    degree,
    disjoint_union,
    find_chain,
    index_set,
    nu_mass,
    rho_rectangle,
    singleton_partition,
)
from .modelfile import load_model, parse_model
from .operators import (
    OperatorBundle,
    SpectralReport,
    apply_R,
    apply_Rtilde,
    assemble_operators,
    cesaro_average,
    check_symmetric_operator,
    harmonic_space,
    rho_n,
    spectral_report,
)
from .semigroups import (
    GreenDecomposition,
    green_operator,
    heat_semigroup,
    poisson_semigroup,
    riesz_decompose,
    site_rate_heat_series,
    uniformized_heat_series,
)
from .energy import (
    EnergyElement,
    EnergyReport,
    boundary_embed,
    energy_inner,
    energy_via_laplacian,
    indicator_identities,
    norm_decomposition,
    orthocomplement_test,
    royden_project,
    symmetric_pair_check,
)
from .paths import (
    CylinderEvent,
    CylinderFunction,
    DissipationValue,
    PathEnsemble,
    apply_S,
    check_key_lemma,
    cylinder_prob_exact,
    dissipation_inner_exact,
    lambda_rectangle,
    sample_paths,
    shift_check,
)
from .fixtures import load_fixture

__version__ = "0.1.0"
