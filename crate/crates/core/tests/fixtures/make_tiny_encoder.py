"""Writes tiny_encoder.onnx and its parity reference.

The model reshapes a [1, 48000] waveform into 100 frames of 480 samples and
projects each frame with a fixed [480, 16] matrix, giving [1, 100, 16].
The reference holds the mean-pooled output for a deterministic test signal.
"""
import json
import pathlib

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

HERE = pathlib.Path(__file__).parent
rng = np.random.default_rng(7)
weight = (rng.standard_normal((480, 16)) / np.sqrt(480)).astype(np.float32)

graph = helper.make_graph(
    [
        helper.make_node("Reshape", ["waveform", "shape"], ["framed"]),
        helper.make_node("MatMul", ["framed", "weight"], ["features"]),
    ],
    "tiny_encoder",
    [helper.make_tensor_value_info("waveform", TensorProto.FLOAT, [1, 48000])],
    [helper.make_tensor_value_info("features", TensorProto.FLOAT, [1, 100, 16])],
    initializer=[
        numpy_helper.from_array(np.array([1, 100, 480], dtype=np.int64), "shape"),
        numpy_helper.from_array(weight, "weight"),
    ],
)
model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
model.ir_version = 8
onnx.checker.check_model(model)
onnx.save(model, HERE / "tiny_encoder.onnx")

t = np.arange(48000) / 16000.0
signal = (0.5 * np.sin(2 * np.pi * 440.0 * t)).astype(np.float32)
pooled = (signal.reshape(100, 480) @ weight).mean(axis=0)
(HERE / "tiny_encoder_reference.json").write_text(
    json.dumps({"signal": "0.5*sin(2*pi*440*n/16000)", "pooled": [float(v) for v in pooled]}, indent=1)
)
