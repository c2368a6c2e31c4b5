from typing import Optional

from src.data.dataset import LongitudinalDataset
from src.estimators.ipw import prepare_nuisance
from src.estimators.result import EstimateResult
from src.inference.eif import compute_eif, eif_mean, wald_interval
from src.nuisance.models import FittedNuisanceSet
from src.nuisance.sequential import evaluate_nuisance
from src.nuisance.spec import NuisanceSpec
from src.utils.helpers import log_diagnostics, weighted_mean


def estimate_onestep(data: LongitudinalDataset, spec: NuisanceSpec, regime, alpha: float = 0.05,
                     nuisance: Optional[FittedNuisanceSet] = None) -> EstimateResult:
    """
    Plug-in mean of Q_{M_0} plus the empirical mean of the estimated influence function.
    """
    nuisance = prepare_nuisance(data, spec, regime, nuisance)
    if nuisance.cache is None:
        nuisance = evaluate_nuisance(nuisance, data)
    weights = data.weights
    plug_in = weighted_mean(nuisance.cache.q_m[0], weights)
    around_plug_in = compute_eif(nuisance, data, plug_in)
    psi = plug_in + weighted_mean(around_plug_in.total, weights)
    eif = compute_eif(nuisance, data, psi)
    wald = wald_interval(eif, psi, alpha, weights)
    diagnostics = list(nuisance.diagnostics) + list(nuisance.cache.diagnostics) + list(wald.diagnostics)
    log_diagnostics('onestep', list(wald.diagnostics))
    return EstimateResult(
        estimator='onestep',
        psi=psi,
        regime=nuisance.regime.key,
        n=data.n_rows,
        alpha=alpha,
        se=wald.se,
        ci=(wald.lo, wald.hi),
        eif_values=eif.total,
        eif_mean=eif_mean(eif, weights),
        diagnostics=diagnostics,
        details={'plug_in': plug_in},
    )
