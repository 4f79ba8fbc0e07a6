"""
Example Diagnostic

Quick script that prints the exact p-value laws on the four-point example.
- Data (1, 2, -0.5, 0.3), statistic x1 + x2
- S = {Id, 3412, 4321}, not a subgroup
- Naive, corrected and averaged constructions, each with its validity audit
"""
import os
import sys

# Ensure backend package imports work when run directly
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from services.permutation_service import Perm, is_subgroup
from services.statistics_service import sum_first_k
from services.testing_engine import Method, MethodSpec
from services.oracle_service import exact_p_distribution, fraction_str, validity_audit

VALUES = (1.0, 2.0, -0.5, 0.3)
PERM_SET = [Perm((1, 2, 3, 4)), Perm((3, 4, 1, 2)), Perm((4, 3, 2, 1))]
METHODS = (Method.NAIVE, Method.EXHAUSTIVE, Method.PBAR_EXHAUSTIVE)


def run(values=VALUES, perms=PERM_SET, k=2):
    stat = sum_first_k(k)
    print(f"Data: {list(values)}, statistic: sum of first {k}")
    print(f"Permutation set: {', '.join(str(p) for p in perms)} (subgroup: {is_subgroup(perms)})")

    results = {}
    for method in METHODS:
        dist = exact_p_distribution(values, stat, MethodSpec(method, perms))
        audit = validity_audit(dist, factor=dist.factor)
        results[method.value] = (dist, audit)

        law = ', '.join(f"{fraction_str(v)}: {fraction_str(p)}" for v, p in dist.atoms.items())
        print(f"\n{method.value}")
        print(f"  law: {{{law}}}")
        status = "✓ valid" if audit.passed else "✗ INVALID"
        print(f"  {status} at factor {audit.factor}; worst alpha {fraction_str(audit.worst_alpha)} "
              f"has P(P <= alpha) = {fraction_str(audit.worst_cdf)}")
    return results


if __name__ == '__main__':
    run()
