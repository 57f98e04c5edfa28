"""Single-qubit linear-inversion tomography and its physicality projection."""
import numpy as np

from photon_bench import analysis, qcore
from photon_bench.counts import CountTable
from photon_bench.qcore import PureState

rng = np.random.default_rng(4)
for label in ("H", "+", "R"):
    psi = PureState.from_label(label)
    counts = CountTable()
    for basis in "XYZ":
        counts = counts + qcore.sample_outcomes(psi.dm(), [basis], 400, rng)
    r = analysis.tomography_1q(counts)
    print(f"|{label}>  raw Stokes {np.round(r.raw_stokes, 3)}  projected: {r.projected}"
          f"  F = {analysis.state_fidelity(r.rho, psi):.4f}")

# a table no quantum state could produce
bad = CountTable({("X", "+"): 400, ("Y", "R"): 400, ("Z", "H"): 400})
r = analysis.tomography_1q(bad)
print(f"\nall-plus table: raw Bloch length {np.linalg.norm(r.raw_stokes):.3f}"
      f" -> projected {np.linalg.norm(r.stokes):.3f}, eigenvalues {np.round(r.rho.eigenvalues(), 6)}")
print("element stderr:\n", np.round(r.stderr_per_element, 4))
