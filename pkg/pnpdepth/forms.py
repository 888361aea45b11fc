# pnpdepth/forms.py
from django import forms

from depthnet.networks import Arch, InputMode
from refinement.pnp import UpdateRule
from sparsity.lidar import PRESETS
from tensorcore.losses import LossKind

ARCH_CHOICES = [(a.value, a.value) for a in Arch if a is not Arch.CUSTOM]
MODE_CHOICES = [(m.value, m.value) for m in InputMode]
LOSS_CHOICES = [(k.value, k.value) for k in LossKind]
RULE_CHOICES = [(r.value, r.value) for r in UpdateRule]


class LowerChoiceField(forms.ChoiceField):
    def to_python(self, value):
        return super().to_python(value).strip().lower()


class RunConfigForm(forms.Form):
    """Valida los pares clave=valor de un fichero RunConfig."""

    arch = LowerChoiceField(choices=ARCH_CHOICES)
    input_mode = LowerChoiceField(choices=MODE_CHOICES)
    tap = forms.CharField(required=False)

    # Refinamiento
    alpha = forms.FloatField()
    iterations = forms.IntegerField(min_value=0)
    loss = LowerChoiceField(choices=LOSS_CHOICES)
    update_rule = LowerChoiceField(choices=RULE_CHOICES)
    adam_beta1 = forms.FloatField(min_value=0.0, max_value=0.999999)
    adam_beta2 = forms.FloatField(min_value=0.0, max_value=0.999999)
    adam_eps = forms.FloatField()

    # Observaciones
    n_samples = forms.IntegerField(min_value=0, required=False)
    lidar_preset = forms.CharField(required=False)

    seed = forms.IntegerField(min_value=0)

    # Escenas
    height = forms.IntegerField(min_value=16)
    width = forms.IntegerField(min_value=16)
    d_min = forms.FloatField()
    d_max = forms.FloatField()
    n_objects = forms.IntegerField(min_value=0)
    n_scenes = forms.IntegerField(min_value=0)

    # Entrenamiento
    epochs = forms.IntegerField(min_value=0)
    batch_size = forms.IntegerField(min_value=1)
    learning_rate = forms.FloatField()
    train_loss = LowerChoiceField(choices=LOSS_CHOICES)
    train_samples_min = forms.IntegerField(min_value=1, required=False)
    train_samples_max = forms.IntegerField(min_value=1, required=False)

    scene_dir = forms.CharField(required=False)
    output_dir = forms.CharField(required=False)

    def clean_alpha(self):
        alpha = self.cleaned_data['alpha']
        if not alpha > 0:
            raise forms.ValidationError("alpha must be positive.")
        return alpha

    def clean_adam_eps(self):
        eps = self.cleaned_data['adam_eps']
        if not eps > 0:
            raise forms.ValidationError("adam_eps must be positive.")
        return eps

    def clean_learning_rate(self):
        lr = self.cleaned_data['learning_rate']
        if not lr > 0:
            raise forms.ValidationError("learning_rate must be positive.")
        return lr

    def clean_lidar_preset(self):
        name = self.cleaned_data.get('lidar_preset', '').strip()
        if name and name.upper() not in {p.upper() for p in PRESETS}:
            raise forms.ValidationError(f"unknown LiDAR preset, expected one of {sorted(PRESETS)}.")
        return name

    def clean(self):
        cleaned = super().clean()
        d_min, d_max = cleaned.get('d_min'), cleaned.get('d_max')
        if d_min is not None and d_max is not None and not (0 < d_min < d_max):
            raise forms.ValidationError("depth bounds need 0 < d_min < d_max.")
        low, high = cleaned.get('train_samples_min'), cleaned.get('train_samples_max')
        if (low is None) != (high is None) or (low is not None and low > high):
            self.add_error('train_samples_max', "train sample range needs both bounds and min <= max.")
        arch = cleaned.get('arch')
        for side in ('height', 'width'):
            size = cleaned.get(side)
            if arch and arch != Arch.PLAIN_CNN.value and size and size % 4:
                self.add_error(side, f"{arch} needs {side} divisible by 4.")
        return cleaned
