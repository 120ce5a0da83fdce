from fbsde.jumps.models import SpatialMesh, TimePartition
from fbsde.jumps.problems import exact_layer, registry_get
from fbsde.jumps.solver import SolverConfig, default_padding, solve

problem = registry_get("example1")
config = SolverConfig(m_y=2, m_f=1, degree=3)
partition = TimePartition(problem.horizon, 16)
mesh = SpatialMesh.uniform(0.01, (0.0, 1.0), default_padding(problem, config))

result = solve(problem, mesh, partition, config)
exact = exact_layer(problem, mesh, 0.0)

mask = mesh.interest_mask()
for name in ("y", "z", "gamma"):
    error = abs(getattr(result.layer, name) - getattr(exact, name))[mask].max()
    print(f"{name}: {error:.3e}")
