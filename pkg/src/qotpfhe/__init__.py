"""Quaternion one-time-pad quantum homomorphic encryption, simulated end to end.

Modules, bottom up:
  su2core    quaternion keys and their unitary matrices
  eulerconv  Euler angles and the fixed-point conversion circuit
  lattice    toy matrix/vector LWE encryption with a gadget trapdoor
  hebackend  bit-level FHE backends (mock and lattice) and key chains
  qsim       statevector simulator
  crot       rotations controlled by encrypted angles
  qfhe       the pad, the leveled scheme, circuits and the cost model
  cli        command-line front end
"""

__version__ = "0.1.0"
