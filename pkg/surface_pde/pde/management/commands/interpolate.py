from pde.experiments import run_interpolate
from pde.fields import write_vertex_field
from pde.mesh import write_off
from pde.serializers import InterpolateConfigSerializer

from ._base import PdeCommand, write_rows

COLUMNS = ["t", "file", "iterations", "residual"]


class Command(PdeCommand):
    help = "Displacement interpolation between two distributions as weighted barycenters"
    config_serializer = InterpolateConfigSerializer

    def run(self, config, out_dir, threads, seed):
        mesh, results = run_interpolate(config, threads, seed)
        write_off(mesh, out_dir / "mesh.off")
        rows = []
        for k, (t, distribution) in enumerate(results):
            name = f"interpolant_{k:02d}.txt"
            write_vertex_field(out_dir / name, distribution.mu)
            rows.append({"t": t, "file": name, "iterations": len(distribution.residuals),
                         "residual": distribution.residuals[-1]})
        write_rows(out_dir / "residuals.csv", rows, COLUMNS)
        self.write_manifest(out_dir, config, seed, threads, interpolants=[row["file"] for row in rows])
        return "\n".join([",".join(COLUMNS)] + [
            f"{row['t']!r},{row['file']},{row['iterations']},{row['residual']!r}" for row in rows
        ])
