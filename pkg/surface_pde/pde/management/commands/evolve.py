from pde.mesh import write_off
from pde.experiments import run_evolve
from pde.serializers import EvolveConfigSerializer

from ._base import PdeCommand


class Command(PdeCommand):
    help = "Evolve a PDE on a triangle mesh by Strang splitting and export the trajectory"
    config_serializer = EvolveConfigSerializer

    def run(self, config, out_dir, threads, seed):
        mesh, trajectory = run_evolve(config, seed)
        write_off(mesh, out_dir / "mesh.off")
        trajectory.export(out_dir, mesh_file="mesh.off", config={**config, "seed": seed})
        return f"Wrote {len(trajectory.fields)} snapshots over {len(trajectory.diagnostics)} steps to {out_dir}"
