from pde.experiments import build_mesh
from pde.mesh import write_obj, write_off
from pde.serializers import MeshGenConfigSerializer

from ._base import PdeCommand


class Command(PdeCommand):
    help = "Generate (or load and perturb) a mesh and write it as OFF or OBJ"
    config_serializer = MeshGenConfigSerializer

    def run(self, config, out_dir, threads, seed):
        mesh = build_mesh(config["mesh"], seed)
        path = out_dir / f"mesh.{config['format']}"
        (write_obj if config["format"] == "obj" else write_off)(mesh, path)
        self.write_manifest(out_dir, config, seed, threads, mesh=path.name,
                            vertices=mesh.n_vertices, faces=mesh.n_faces)
        return f"Wrote {mesh} to {path}"
