"""
Tests for the four-point example diagnostic script
"""
from fractions import Fraction

from tools.example_diagnostic import run


def test_diagnostic_reports_the_three_laws(capsys):
    results = run()
    out = capsys.readouterr().out
    assert 'subgroup: False' in out
    assert '✗ INVALID' in out

    naive, naive_audit = results['naive']
    assert naive.cdf(Fraction(1, 3)) == Fraction(1, 2)
    assert not naive_audit.passed

    corrected, corrected_audit = results['exhaustive-q']
    assert corrected.atoms == {Fraction(1, 3): Fraction(1, 6), Fraction(2, 3): Fraction(1, 3), Fraction(1): Fraction(1, 2)}
    assert corrected_audit.passed

    pbar, pbar_audit = results['pbar-exhaustive']
    assert pbar.atoms == {Fraction(5, 9): Fraction(1, 2), Fraction(1): Fraction(1, 2)}
    assert pbar_audit.passed and pbar_audit.factor == 2
