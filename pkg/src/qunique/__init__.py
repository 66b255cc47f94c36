"""Uniqueness and explosion analysis for countable-state Markov jump models.

The package decides, or brackets, whether the minimal process of a
conservative, totally stable Q-matrix is non-explosive (equivalently,
whether the Q-process is unique).
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DSLSyntaxError,
    EvaluationError,
    ModelDefinitionError,
    PreconditionError,
    QUniqueError,
    RateOverflowError,
    ResourceError,
    UsageError,
)
from .generator import (  # noqa: E402
    GeneratorModel,
    StateVec,
    Transition,
    Window,
    apply_generator,
    enumerate_window,
    total_rate,
)
from .dsl import instantiate, load_model, parse_certificate, parse_model  # noqa: E402
from .zoo import (  # noqa: E402
    FIXTURES,
    SchloglParams,
    birth_death,
    build_fixture,
    interleaved,
    pure_birth,
    schlogl,
)
from .verdict import Label, MethodVerdict, VerdictThresholds, reconcile  # noqa: E402
from .truncation import EmbeddedMatrix, build_embedded  # noqa: E402
from .resolvent import (  # noqa: E402
    SolutionBracket,
    maximal_solution_bracket,
    resolvent_mass,
    uniqueness_verdict_resolvent,
)
from .embedded import (  # noqa: E402
    DeltaChain,
    build_delta_chain,
    return_probability_bracket,
    uniqueness_verdict_embedded,
)
from .series import classify_series, pure_birth_verdict  # noqa: E402
from .certificates import (  # noqa: E402
    CertificateReport,
    LyapunovCertificate,
    check_corollary_certificate,
    check_nonuniqueness_certificate,
    check_uniqueness_certificate,
    scan_drift_constant,
)
from .simulate import (  # noqa: E402
    JumpPath,
    estimate_explosion_probability,
    flag_explosive,
    simulate_path,
)
from .analysis import AnalysisConfig, AnalysisResult, run_analysis  # noqa: E402
