# Numerical and bookkeeping constants used throughout the package
# Oct 2026

# U is +infinity on the collision locus. Returned explicitly when some r_ab == 0,
# never produced by floating overflow
U_COLLISION = float('inf')

# version stamped into every CSV header and JSON document written by the package
SCHEMA_VERSION = 1

# Gauss-Legendre order used for quadrature against dense output, per step
quad_order = 16
