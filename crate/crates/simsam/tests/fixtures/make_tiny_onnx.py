"""Writes a tiny encoder/decoder pair with the exported-SAM input/output names.

The decoder ignores the embedding and returns logit +5 inside the prompt box
and -5 outside, on a fixed 32x32 grid. Usage: python make_tiny_onnx.py OUT_DIR
"""
import sys

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

S = 64  # encoder input side
H = W = 32  # output mask size
SCALE = S / max(H, W)

out = sys.argv[1]

enc = helper.make_graph(
    [helper.make_node("AveragePool", ["image"], ["image_embeddings"], kernel_shape=[16, 16], strides=[16, 16])],
    "encoder",
    [helper.make_tensor_value_info("image", TensorProto.FLOAT, [1, 3, S, S])],
    [helper.make_tensor_value_info("image_embeddings", TensorProto.FLOAT, [1, 3, S // 16, S // 16])],
)
onnx.save(helper.make_model(enc, opset_imports=[helper.make_opsetid("", 13)]), f"{out}/encoder.onnx")

ys, xs = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
consts = {
    "X": (xs * SCALE).astype(np.float32).reshape(1, 1, H, W),
    "Y": (ys * SCALE).astype(np.float32).reshape(1, 1, H, W),
    "pos": np.array(5.0, np.float32),
    "neg": np.array(-5.0, np.float32),
    "g_tl": np.array([-2], np.int64),
    "g_br": np.array([-1], np.int64),
    "i0": np.array([0], np.int64),
    "i1": np.array([1], np.int64),
    "shape4": np.array([1, 1, 1, 1], np.int64),
    "iou": np.array([[1.0]], np.float32),
}
nodes = [
    helper.make_node("Gather", ["point_coords", "g_tl"], ["tl"], axis=1),
    helper.make_node("Gather", ["point_coords", "g_br"], ["br"], axis=1),
]
for corner in ("tl", "br"):
    for name, idx in (("x", "i0"), ("y", "i1")):
        nodes += [
            helper.make_node("Gather", [corner, idx], [f"{corner}{name}_raw"], axis=2),
            helper.make_node("Reshape", [f"{corner}{name}_raw", "shape4"], [f"{corner}{name}"]),
        ]
nodes += [
    helper.make_node("GreaterOrEqual", ["X", "tlx"], ["c0"]),
    helper.make_node("LessOrEqual", ["X", "brx"], ["c1"]),
    helper.make_node("GreaterOrEqual", ["Y", "tly"], ["c2"]),
    helper.make_node("LessOrEqual", ["Y", "bry"], ["c3"]),
    helper.make_node("And", ["c0", "c1"], ["a0"]),
    helper.make_node("And", ["c2", "c3"], ["a1"]),
    helper.make_node("And", ["a0", "a1"], ["inside"]),
    helper.make_node("Where", ["inside", "pos", "neg"], ["masks"]),
    helper.make_node("Identity", ["iou"], ["iou_predictions"]),
]
dec = helper.make_graph(
    nodes,
    "decoder",
    [
        helper.make_tensor_value_info("image_embeddings", TensorProto.FLOAT, [1, 3, S // 16, S // 16]),
        helper.make_tensor_value_info("point_coords", TensorProto.FLOAT, [1, "n", 2]),
        helper.make_tensor_value_info("point_labels", TensorProto.FLOAT, [1, "n"]),
        helper.make_tensor_value_info("mask_input", TensorProto.FLOAT, [1, 1, S // 4, S // 4]),
        helper.make_tensor_value_info("has_mask_input", TensorProto.FLOAT, [1]),
        helper.make_tensor_value_info("orig_im_size", TensorProto.FLOAT, [2]),
    ],
    [
        helper.make_tensor_value_info("masks", TensorProto.FLOAT, [1, 1, H, W]),
        helper.make_tensor_value_info("iou_predictions", TensorProto.FLOAT, [1, 1]),
    ],
    initializer=[numpy_helper.from_array(v, k) for k, v in consts.items()],
)
model = helper.make_model(dec, opset_imports=[helper.make_opsetid("", 13)])
onnx.checker.check_model(model)
onnx.save(model, f"{out}/decoder.onnx")
with open(f"{out}/neural.toml", "w") as f:
    f.write(f"input_size = {S}\n")
