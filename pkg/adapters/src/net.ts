/** Tiny parameter store: named tf.Variables with seeded initialization and a
 * flat-file checkpoint format (spec JSON + raw float32 blob). Networks build
 * their parameters deterministically from (config, seed), so loading is
 * "rebuild then assign by name". */
import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

export interface ConvParams {
  w: tf.Variable;
  b: tf.Variable;
}

export class ParamStore {
  private readonly params = new Map<string, tf.Variable>();

  add(name: string, init: tf.Tensor): tf.Variable {
    if (this.params.has(name)) {
      throw new Error(`duplicate parameter name: ${name}`);
    }
    // No explicit tf name: those live in a global registry and would collide
    // across network instances; the store's own map is the naming authority.
    const variable = tf.variable(init, true);
    init.dispose();
    this.params.set(name, variable);
    return variable;
  }

  conv(name: string, k: number, cin: number, cout: number, seed: number,
       scheme: "glorot" | "he" = "glorot"): ConvParams {
    const init = scheme === "glorot"
      ? tf.initializers.glorotUniform({ seed })
      : tf.initializers.heNormal({ seed });
    return {
      w: this.add(`${name}/w`, init.apply([k, k, cin, cout]) as tf.Tensor),
      b: this.add(`${name}/b`, tf.zeros([cout])),
    };
  }

  dense(name: string, din: number, dout: number, seed: number): ConvParams {
    return {
      w: this.add(`${name}/w`,
                  tf.initializers.heNormal({ seed }).apply([din, dout]) as tf.Tensor),
      b: this.add(`${name}/b`, tf.zeros([dout])),
    };
  }

  list(prefix?: string): tf.Variable[] {
    const out: tf.Variable[] = [];
    for (const [name, variable] of this.params) {
      if (!prefix || name.startsWith(prefix)) out.push(variable);
    }
    return out;
  }

  save(dir: string, name: string): void {
    fs.mkdirSync(dir, { recursive: true });
    const spec: { name: string; shape: number[]; offset: number; length: number }[] = [];
    const chunks: Buffer[] = [];
    let offset = 0;
    for (const [paramName, variable] of this.params) {
      const data = variable.dataSync() as Float32Array;
      spec.push({ name: paramName, shape: variable.shape.slice(), offset, length: data.length });
      chunks.push(Buffer.from(data.buffer, data.byteOffset, data.byteLength));
      offset += data.length;
    }
    fs.writeFileSync(path.join(dir, `${name}.weights.bin`), Buffer.concat(chunks));
    fs.writeFileSync(path.join(dir, `${name}.weights.json`), JSON.stringify({ spec }, null, 1));
  }

  loadFrom(dir: string, name: string): void {
    const { spec } = JSON.parse(
      fs.readFileSync(path.join(dir, `${name}.weights.json`), "utf8")
    ) as { spec: { name: string; shape: number[]; offset: number; length: number }[] };
    const blob = fs.readFileSync(path.join(dir, `${name}.weights.bin`));
    const floats = new Float32Array(blob.buffer, blob.byteOffset, blob.byteLength / 4);
    for (const entry of spec) {
      const variable = this.params.get(entry.name);
      if (!variable) {
        throw new Error(`checkpoint parameter ${entry.name} not present in this network`);
      }
      const values = floats.slice(entry.offset, entry.offset + entry.length);
      const tensor = tf.tensor(values, entry.shape as [number]);
      variable.assign(tensor);
      tensor.dispose();
    }
  }

  dispose(): void {
    for (const variable of this.params.values()) variable.dispose();
    this.params.clear();
  }
}
