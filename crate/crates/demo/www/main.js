import init, { runRollout, phaseValues, partitionTargets } from "./pkg/covertime_demo.js";

const canvas = document.getElementById("grid");
const ctx = canvas.getContext("2d");
const status = document.getElementById("status");
const palette = ["#d1495b", "#00798c", "#edae49", "#66a182", "#8d6a9f", "#2e4057", "#f4845f", "#7d8491"];
const arrows = [[0, -1], [-1, 0], [0, 1], [1, 0]];

const state = {
  targets: new Set(["2,1", "6,2", "1,6", "5,6", "7,7"]),
  start: "0,0",
  overlay: null,
};

const num = (id) => Number(document.getElementById(id).value);
const world = () => [num("width"), num("height"), BigInt(num("field-seed")), num("noise")];
const targetText = () => [...state.targets].join(";");

function cellSize() {
  const [w, h] = world();
  return Math.floor(Math.min(canvas.width / w, canvas.height / h));
}

function center(x, y) {
  const c = cellSize();
  return [x * c + c / 2, y * c + c / 2];
}

function draw() {
  const [w, h] = world();
  const c = cellSize();
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const ov = state.overlay;
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      let fill = "#f6f7f9";
      if (ov && ov.kind === "values") {
        const t = (ov.doc.values[y * w + x] - ov.doc.min) / (ov.doc.max - ov.doc.min || 1);
        fill = `hsl(${220 - 180 * t}, 70%, ${85 - 35 * t}%)`;
      }
      ctx.fillStyle = fill;
      ctx.fillRect(x * c, y * c, c - 1, c - 1);
    }
  }
  if (ov && ov.kind === "values") {
    ctx.strokeStyle = "#1d2330";
    for (let s = 0; s < w * h; s++) {
      const [cx, cy] = center(s % w, Math.floor(s / w));
      const [dx, dy] = arrows[ov.doc.moves[s]];
      ctx.beginPath();
      ctx.moveTo(cx - dx * c * 0.2, cy - dy * c * 0.2);
      ctx.lineTo(cx + dx * c * 0.3, cy + dy * c * 0.3);
      ctx.stroke();
    }
  }
  const owner = new Map();
  if (ov && ov.kind === "partition") {
    ov.doc.parts.forEach((part, i) => part.forEach(([x, y]) => owner.set(`${x},${y}`, i)));
  }
  for (const key of state.targets) {
    const [x, y] = key.split(",").map(Number);
    const [cx, cy] = center(x, y);
    ctx.fillStyle = owner.has(key) ? palette[owner.get(key) % palette.length] : "#d1495b";
    ctx.beginPath();
    ctx.arc(cx, cy, c * 0.3, 0, 2 * Math.PI);
    ctx.fill();
  }
  if (ov && ov.kind === "rollout") {
    ctx.strokeStyle = "rgba(29, 35, 48, 0.55)";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ov.doc.path.forEach(([x, y], i) => {
      const [cx, cy] = center(x, y);
      const jitter = ((i * 7919) % 11 - 5) * c * 0.02;
      if (i === 0) ctx.moveTo(cx, cy);
      else ctx.lineTo(cx + jitter, cy + jitter);
    });
    ctx.stroke();
    ctx.lineWidth = 1;
  }
  const [sx, sy] = state.start.split(",").map(Number);
  const [cx, cy] = center(sx, sy);
  ctx.strokeStyle = "#1d2330";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.arc(cx, cy, c * 0.42, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.lineWidth = 1;
}

function attempt(label, fn) {
  try {
    const t0 = performance.now();
    const text = fn();
    const ms = (performance.now() - t0).toFixed(1);
    return [JSON.parse(text), ms];
  } catch (err) {
    status.textContent = `${label}: ${err.message ?? err}`;
    return [null, null];
  }
}

function onRun() {
  const [doc, ms] = attempt("rollout", () =>
    runRollout(...world(), targetText(), state.start, num("gamma"), BigInt(num("run-seed"))));
  if (!doc) return;
  state.overlay = { kind: "rollout", doc };
  const opt = doc.optimal_expected === null ? "too large to solve here" : doc.optimal_expected.toFixed(3);
  status.textContent = `cover time ${doc.cover_time} in ${doc.phases} phases (${ms} ms)\noptimal expected cover time: ${opt}`;
  draw();
}

function onValues() {
  const [doc, ms] = attempt("values", () =>
    phaseValues(...world(), targetText(), state.start, num("gamma")));
  if (!doc) return;
  state.overlay = { kind: "values", doc };
  status.textContent = `first-phase values in [${doc.min.toFixed(3)}, ${doc.max.toFixed(3)}], ${doc.sweeps} sweeps (${ms} ms)`;
  draw();
}

function onSplit() {
  const [doc, ms] = attempt("partition", () =>
    partitionTargets(...world(), targetText(), state.start, num("agents")));
  if (!doc) return;
  state.overlay = { kind: "partition", doc };
  status.textContent = `${doc.parts.length} parts, largest average path length ${doc.M_a.toFixed(3)}, ${doc.passes} passes (${ms} ms)`;
  draw();
}

canvas.addEventListener("click", (ev) => {
  const [w, h] = world();
  const c = cellSize();
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor((ev.clientX - rect.left) / c);
  const y = Math.floor((ev.clientY - rect.top) / c);
  if (x >= w || y >= h) return;
  const key = `${x},${y}`;
  if (ev.shiftKey) state.start = key;
  else if (state.targets.has(key)) state.targets.delete(key);
  else state.targets.add(key);
  state.overlay = null;
  draw();
});

for (const id of ["width", "height", "field-seed", "noise"]) {
  document.getElementById(id).addEventListener("change", () => {
    const [w, h] = world();
    const inside = (key) => {
      const [x, y] = key.split(",").map(Number);
      return x < w && y < h;
    };
    state.targets = new Set([...state.targets].filter(inside));
    if (!inside(state.start)) state.start = "0,0";
    state.overlay = null;
    draw();
  });
}
document.getElementById("run").addEventListener("click", onRun);
document.getElementById("values").addEventListener("click", onValues);
document.getElementById("split").addEventListener("click", onSplit);
document.getElementById("clear").addEventListener("click", () => {
  state.targets.clear();
  state.overlay = null;
  draw();
});

await init();
status.textContent = "ready";
draw();
