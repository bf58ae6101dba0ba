from pathlib import Path

from rest_framework import serializers

from .flows import FLOW_KINDS
from .hamiltonian import DIVERGENCE_FORMS, G_EQUATION, FOKKER_PLANCK, KINDS
from .mesh import MESH_FORMATS, MESH_KINDS
from .models import RunRecord
from .transport import MODES

REQUIRED_GENERATOR_PARAMS = {
    "icosphere": ("level",),
    "grid": ("nx", "ny"),
    "torus": ("R", "r", "nu", "nv"),
    "unit_line": ("n",),
}


def positive(value):
    if value <= 0:
        raise serializers.ValidationError("Must be positive.")
    return value


def existing_file(value):
    if not Path(value).is_file():
        raise serializers.ValidationError(f"File not found: {value}")
    return value


class RunRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = RunRecord
        fields = "__all__"
        read_only_fields = [f.name for f in RunRecord._meta.fields]


class PerturbSerializer(serializers.Serializer):
    amplitude = serializers.FloatField(min_value=0)
    seed = serializers.IntegerField(required=False)


class MeshSourceSerializer(serializers.Serializer):
    file = serializers.CharField(required=False, validators=[existing_file])
    format = serializers.ChoiceField(choices=MESH_FORMATS, required=False)
    generator = serializers.ChoiceField(choices=MESH_KINDS, required=False)
    level = serializers.IntegerField(min_value=0, required=False)
    nx = serializers.IntegerField(min_value=1, required=False)
    ny = serializers.IntegerField(min_value=1, required=False)
    spacing = serializers.FloatField(required=False, validators=[positive])
    R = serializers.FloatField(required=False, validators=[positive])
    r = serializers.FloatField(required=False, validators=[positive])
    nu = serializers.IntegerField(min_value=3, required=False)
    nv = serializers.IntegerField(min_value=3, required=False)
    n = serializers.IntegerField(min_value=1, required=False)
    perturb = PerturbSerializer(required=False)

    def validate(self, data):
        if bool(data.get("file")) == bool(data.get("generator")):
            raise serializers.ValidationError("Give exactly one of 'file' or 'generator'.")
        generator = data.get("generator")
        if generator:
            missing = [p for p in REQUIRED_GENERATOR_PARAMS[generator] if p not in data]
            if missing:
                raise serializers.ValidationError({p: f"Required by the {generator} generator." for p in missing})
        return data


class FlowSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=FLOW_KINDS + ("file",))
    velocity = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3,
                                     default=[1.0, 0.0, 0.0])
    shear_rate = serializers.FloatField(default=1.0)
    amplitude = serializers.FloatField(default=1.0)
    path = serializers.CharField(required=False, validators=[existing_file])

    def validate(self, data):
        if data["kind"] == "file" and not data.get("path"):
            raise serializers.ValidationError({"path": "Required for a file-based flow."})
        return data


class BoundarySerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=("neumann", "dirichlet"), default="neumann")
    vertices = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False)
    value = serializers.FloatField(default=0.0)


class PdeSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=KINDS)
    epsilon = serializers.FloatField(min_value=0)
    flow = FlowSerializer(required=False)
    divergence = serializers.ChoiceField(choices=DIVERGENCE_FORMS, default="weak")
    boundary = BoundarySerializer(required=False)

    def validate(self, data):
        if data["kind"] in (G_EQUATION, FOKKER_PLANCK) and "flow" not in data:
            raise serializers.ValidationError({"flow": f"Required for {data['kind']}."})
        if data["kind"] not in (G_EQUATION, FOKKER_PLANCK) and "flow" in data:
            raise serializers.ValidationError({"flow": "Nonlinear diffusion takes no flow."})
        return data


class InitialSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=("heat_bump", "gaussian", "radial_cone", "constant", "file"))
    vertex = serializers.IntegerField(min_value=0, default=0)
    t = serializers.FloatField(default=1e-2, validators=[positive])
    log = serializers.BooleanField(default=False)
    center = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3,
                                   default=[0.0, 0.0, 0.0])
    sigma = serializers.FloatField(default=0.1, validators=[positive])
    axes = serializers.ListField(child=serializers.IntegerField(min_value=0, max_value=2),
                                 min_length=1, max_length=3, default=[0, 1, 2])
    radius = serializers.FloatField(default=0.25, validators=[positive])
    value = serializers.FloatField(default=0.0)
    path = serializers.CharField(required=False, validators=[existing_file])

    def validate(self, data):
        if data["kind"] == "file" and not data.get("path"):
            raise serializers.ValidationError({"path": "Required for a file-based initial field."})
        return data


class SolverSerializer(serializers.Serializer):
    eps_primal = serializers.FloatField(required=False, validators=[positive])
    eps_dual = serializers.FloatField(required=False, validators=[positive])
    eps_gap = serializers.FloatField(required=False, validators=[positive])
    max_iters = serializers.IntegerField(min_value=1, required=False)
    warm_start = serializers.BooleanField(required=False)
    rescale = serializers.BooleanField(required=False)


class SinkhornSerializer(serializers.Serializer):
    gamma = serializers.FloatField(validators=[positive])
    outer_iters = serializers.IntegerField(min_value=1, default=500)
    n_sub = serializers.IntegerField(min_value=1, default=1)
    mode = serializers.ChoiceField(choices=MODES, default="log_domain")
    tolerance = serializers.FloatField(default=1e-6, validators=[positive])


class EvolveConfigSerializer(serializers.Serializer):
    mesh = MeshSourceSerializer()
    pde = PdeSerializer()
    initial = InitialSerializer()
    h = serializers.FloatField(validators=[positive])
    steps = serializers.IntegerField(min_value=1)
    snapshot_every = serializers.IntegerField(min_value=1, default=1)
    solver = SolverSerializer(required=False)


class ConvergeTimeConfigSerializer(serializers.Serializer):
    mesh = MeshSourceSerializer()
    pde = PdeSerializer()
    initial = InitialSerializer()
    h0 = serializers.FloatField(validators=[positive])
    n_halvings = serializers.IntegerField(min_value=2)
    steps = serializers.IntegerField(min_value=1, default=1)
    solver = SolverSerializer(required=False)


class ConvergeSpaceConfigSerializer(serializers.Serializer):
    ladder = MeshSourceSerializer(many=True)
    reference = MeshSourceSerializer(required=False)
    pde = PdeSerializer()
    initial = InitialSerializer()
    h = serializers.FloatField(default=1e-5, validators=[positive])
    steps = serializers.IntegerField(min_value=1, default=1)
    solver = SolverSerializer(required=False)

    def validate_ladder(self, value):
        if len(value) < 2:
            raise serializers.ValidationError("A refinement ladder needs at least two meshes.")
        return value

    def validate(self, data):
        if "reference" not in data and any(spec.get("file") for spec in data["ladder"]):
            raise serializers.ValidationError({"reference": "Required when the ladder uses mesh files."})
        if data["initial"]["kind"] in ("heat_bump", "file"):
            raise serializers.ValidationError(
                {"initial": "Use an analytic initial field so every mesh samples the same function."})
        return data


class BarycenterConfigSerializer(serializers.Serializer):
    mesh = MeshSourceSerializer()
    inputs = InitialSerializer(many=True)
    weights = serializers.ListField(child=serializers.FloatField(min_value=0), required=False)
    sinkhorn = SinkhornSerializer()
    solver = SolverSerializer(required=False)

    def validate(self, data):
        if len(data["inputs"]) < 2:
            raise serializers.ValidationError({"inputs": "A barycenter needs at least two inputs."})
        weights = data.get("weights")
        if weights is not None:
            if len(weights) != len(data["inputs"]):
                raise serializers.ValidationError({"weights": "Give one weight per input."})
            if abs(sum(weights) - 1.0) > 1e-12:
                raise serializers.ValidationError({"weights": "Weights must sum to 1."})
        return data


class InterpolateConfigSerializer(serializers.Serializer):
    mesh = MeshSourceSerializer()
    source = InitialSerializer()
    target = InitialSerializer()
    t = serializers.ListField(child=serializers.FloatField(min_value=0, max_value=1), min_length=1,
                              default=[0.0, 0.25, 0.5, 0.75, 1.0])
    sinkhorn = SinkhornSerializer()
    solver = SolverSerializer(required=False)


class CompareGridConfigSerializer(serializers.Serializer):
    n = serializers.IntegerField(min_value=11)
    h = serializers.FloatField(validators=[positive])
    steps = serializers.IntegerField(min_value=0)
    eps_reg = serializers.FloatField(min_value=0, default=1e-6)
    radius = serializers.FloatField(default=0.45, validators=[positive])
    height = serializers.FloatField(default=0.35, validators=[positive])
    solver = SolverSerializer(required=False)


class MeshGenConfigSerializer(serializers.Serializer):
    mesh = MeshSourceSerializer()
    format = serializers.ChoiceField(choices=MESH_FORMATS, default="off")
