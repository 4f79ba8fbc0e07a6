# permkit services: permutations, distributions, statistics, tests, oracle, calibration
