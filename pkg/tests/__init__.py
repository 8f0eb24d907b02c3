# Unit tests for FEM-BEM Transmission Solver
