import json

import numpy as np
import pytest

from stocharma.errors import SchemaError
from stocharma.model import (
    FREE,
    CrossPredictor,
    ModelStructure,
    MultiModel,
    Parameters,
    SeriesModel,
    deserialize,
    init_parameters,
    load_model,
    save_model,
    serialize,
)


def arma22():
    st = ModelStructure(p=2, q=2, d=1, cross_predictors=(("b", 1), ("b", 12)), target="a")
    par = Parameters(zeta=0.1, beta=[0.2, -0.1], alpha=[0.5, 0.1], eta=[0.3, 0.05], gamma=0.8, sigma=0.01)
    return MultiModel({"a": SeriesModel(st, par)}, {"a": {"mean": 1.0, "std": 2.0}})


def test_R():
    assert ModelStructure(p=3, q=1).R == 3
    assert ModelStructure(p=0, q=2).R == 2


def test_structure_guards():
    with pytest.raises(ValueError):
        ModelStructure(p=-1)
    with pytest.raises(ValueError):
        ModelStructure(cross_predictors=(("a", 0),), target="a")
    with pytest.raises(ValueError):
        ModelStructure(cross_predictors=(("b", 1), ("b", 1)))
    with pytest.raises(ValueError):
        ModelStructure(beta0_mode="whatever")


def test_cross_predictor_parse():
    assert CrossPredictor.parse("gdp:12") == CrossPredictor("gdp", 12)
    assert str(CrossPredictor("a:b", 1)) == "a:b:1"
    with pytest.raises(ValueError):
        CrossPredictor.parse("12")


def test_parameter_guards():
    with pytest.raises(ValueError):
        Parameters(gamma=-1.0)
    with pytest.raises(ValueError):
        Parameters(sigma=-0.1)


def test_init_standardized():
    x = np.random.default_rng(0).normal(size=50)
    x = (x - x.mean()) / x.std()
    par = init_parameters(ModelStructure(p=1, q=0), x)
    assert par.gamma == pytest.approx(1.0)
    assert par.beta.size == 0 and par.alpha.tolist() == [0.0]
    assert par.zeta == 0.0 and par.sigma == 0.01


def test_init_free_mode_starts_at_one():
    par = init_parameters(ModelStructure(q=1, beta0_mode=FREE), [1.0, 2.0, np.nan, 0.0])
    assert par.beta0 == 1.0


def test_init_fallback_gamma():
    assert init_parameters(ModelStructure(), [np.nan, 3.0]).gamma == 1.0


def test_roundtrip(tmp_path):
    model = arma22()
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    assert back["a"].structure == model["a"].structure
    assert back["a"].params == model["a"].params
    assert back.transforms == model.transforms
    assert json.loads(path.read_text())["version"] == 1


def test_unknown_version():
    doc = serialize(arma22())
    doc["version"] = 7
    with pytest.raises(SchemaError) as err:
        deserialize(doc)
    assert err.value.field == "version"


def test_vector_length_mismatch():
    doc = serialize(arma22())
    doc["series"]["a"]["parameters"]["alpha"] = [0.5]
    with pytest.raises(SchemaError) as err:
        deserialize(doc)
    assert err.value.field == "series.a.parameters.alpha"


def test_fixed_beta0_cannot_be_overridden():
    doc = serialize(arma22())
    doc["series"]["a"]["parameters"]["beta0"] = 3.0
    assert deserialize(doc)["a"].params.beta0 == 1.0


def test_arma_is_sigma_zero_member():
    par = Parameters(alpha=[0.5], sigma=0.0)
    assert par.sigma == 0.0


def test_validate_unknown_source():
    st = ModelStructure(cross_predictors=(("zz", 1),))
    mm = MultiModel({"a": SeriesModel(st, Parameters(eta=[1.0]))})
    with pytest.raises(SchemaError):
        mm.validate()
    mm.validate(collection_ids=["zz"])


def test_label():
    st = ModelStructure(p=1, q=2, beta0_mode=FREE, cross_predictors=(("b", 1),))
    assert st.label() == "sARMA*(1,2)+b:1"
