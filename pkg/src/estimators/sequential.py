"""
Sequential regression (iterated conditional expectation) estimators.
"""
from typing import Optional

from src.data.dataset import LongitudinalDataset
from src.estimators.ipw import prepare_nuisance
from src.estimators.result import EstimateResult
from src.nuisance.models import FittedNuisanceSet
from src.nuisance.sequential import sequential_Q, sequential_R
from src.nuisance.spec import NuisanceSpec
from src.utils.helpers import weighted_mean


def estimate_sr1(data: LongitudinalDataset, spec: NuisanceSpec, regime, alpha: float = 0.05,
                 nuisance: Optional[FittedNuisanceSet] = None) -> EstimateResult:
    """Mean of Q_{M_0}(L0) from the Q recursion."""
    nuisance = prepare_nuisance(data, spec, regime, nuisance)
    seq = sequential_Q(nuisance, data)
    return EstimateResult(
        estimator='sr1',
        psi=weighted_mean(seq.plug_in, data.weights),
        regime=nuisance.regime.key,
        n=data.n_rows,
        alpha=alpha,
        diagnostics=list(nuisance.diagnostics) + seq.diagnostics,
    )


def estimate_sr2(data: LongitudinalDataset, spec: NuisanceSpec, regime, alpha: float = 0.05,
                 nuisance: Optional[FittedNuisanceSet] = None) -> EstimateResult:
    """Mean of R_{A_0}(L0) from the kappa/R recursion."""
    nuisance = prepare_nuisance(data, spec, regime, nuisance)
    seq = sequential_R(nuisance, data)
    return EstimateResult(
        estimator='sr2',
        psi=weighted_mean(seq.plug_in, data.weights),
        regime=nuisance.regime.key,
        n=data.n_rows,
        alpha=alpha,
        diagnostics=list(nuisance.diagnostics) + seq.diagnostics,
        details={'regressions': list(seq.regressions)},
    )
