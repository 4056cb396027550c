"""Compiler and verifier for sparse simulator Hamiltonians built from clock constructions."""
