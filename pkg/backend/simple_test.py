"""
Simple smoke test of the permkit services on the four-point example; no
files or network needed
"""
import os
import sys
import logging
import traceback

from dotenv import load_dotenv

# Add the backend directory to Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

load_dotenv()

# Configure logging for debug visibility
logging.basicConfig(
    level=logging.WARNING,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EX1_VALUES = (1.0, 2.0, -0.5, 0.3)
EX1_IMAGES = ((1, 2, 3, 4), (3, 4, 1, 2), (4, 3, 2, 1))


def _example():
    from services.permutation_service import Perm
    from services.statistics_service import sum_first_k
    return EX1_VALUES, [Perm(image) for image in EX1_IMAGES], sum_first_k(2)


def test_imports():
    """All service modules import"""
    import services.permutation_service  # noqa: F401
    import services.distribution_service  # noqa: F401
    import services.statistics_service  # noqa: F401
    import services.testing_engine  # noqa: F401
    import services.mcmc_service  # noqa: F401
    import services.oracle_service  # noqa: F401
    import services.calibration_service  # noqa: F401
    import services.runner_service  # noqa: F401


def test_naive_and_corrected():
    from services.testing_engine import pvalue_exhaustive, pvalue_naive
    x, perms, stat = _example()
    assert pvalue_naive(x, stat, perms).value == 1 / 3
    assert pvalue_exhaustive(x, stat, perms, anchor=perms[1]).value == 2 / 3


def test_exact_laws():
    from fractions import Fraction
    from services.testing_engine import Method, MethodSpec
    from services.oracle_service import exact_p_distribution, validity_audit
    x, perms, stat = _example()
    naive = exact_p_distribution(x, stat, MethodSpec(Method.NAIVE, perms))
    corrected = exact_p_distribution(x, stat, MethodSpec(Method.EXHAUSTIVE, perms))
    assert naive.cdf(Fraction(1, 3)) == Fraction(1, 2)
    assert not validity_audit(naive).passed
    assert corrected.cdf(Fraction(1, 3)) == Fraction(1, 6)
    assert validity_audit(corrected).passed


def test_group_closure():
    from services.permutation_service import Perm, generate_subgroup
    group = generate_subgroup([Perm((2, 1, 4, 3)), Perm((3, 4, 1, 2))])
    assert len(group) == 4


def main():
    """Run all smoke checks"""
    print("=" * 50)
    print("PERMKIT SMOKE TEST")
    print("=" * 50)

    checks = [
        ("Imports", test_imports),
        ("Naive and corrected p-values", test_naive_and_corrected),
        ("Exact laws and validity audit", test_exact_laws),
        ("Subgroup closure", test_group_closure),
    ]
    passed = 0
    for name, check in checks:
        try:
            check()
            print(f"✓ {name}")
            passed += 1
        except Exception as e:
            print(f"✗ {name} failed: {e}")
            traceback.print_exc()

    print("\n" + "=" * 50)
    print(f"SUMMARY: {passed}/{len(checks)} checks passed")
    print("=" * 50)
    return passed == len(checks)


if __name__ == "__main__":
    success = main()
    sys.exit(0 if success else 1)
