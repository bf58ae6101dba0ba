from pde.experiments import run_barycenter
from pde.fields import write_vertex_field
from pde.mesh import write_off
from pde.serializers import BarycenterConfigSerializer

from ._base import PdeCommand, write_rows


class Command(PdeCommand):
    help = "Entropic Wasserstein barycenter of vertex distributions with heat-flow kernels"
    config_serializer = BarycenterConfigSerializer

    def run(self, config, out_dir, threads, seed):
        mesh, inputs, result = run_barycenter(config, threads, seed)
        write_off(mesh, out_dir / "mesh.off")
        for k, distribution in enumerate(inputs):
            write_vertex_field(out_dir / f"input_{k}.txt", distribution.mu)
        write_vertex_field(out_dir / "barycenter.txt", result.mu)
        rows = [{"iteration": i, "residual": r} for i, r in enumerate(result.residuals)]
        write_rows(out_dir / "residuals.csv", rows, ["iteration", "residual"])
        self.write_manifest(out_dir, config, seed, threads, barycenter="barycenter.txt",
                            residuals="residuals.csv", final_residual=result.residuals[-1])
        return "\n".join(["iteration,residual"] + [f"{row['iteration']},{row['residual']!r}" for row in rows])
