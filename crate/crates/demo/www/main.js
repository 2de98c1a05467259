import init, { simulate, alpha_sweep, inspect } from "./pkg/confbench_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (x) => (typeof x === "number" ? x.toFixed(4) : x);

let lastQhat = null;

function params() {
  return [num("sim-n"), num("sim-k"), num("sim-seed"), num("sim-t")];
}

function runSimulation() {
  const out = $("sim-out");
  try {
    const r = JSON.parse(simulate(...params(), num("sim-alpha"), $("sim-fn").value));
    lastQhat = r.qhat;
    out.className = "";
    out.innerHTML = `<table>
      <tr><th>n_cal / n_test</th><td>${r.n_cal} / ${r.n_test}</td></tr>
      <tr><th>qhat</th><td>${fmt(r.qhat)}</td></tr>
      <tr><th>coverage</th><td>${fmt(r.coverage)}</td></tr>
      <tr><th>mean set size</th><td>${fmt(r.set_size)}</td></tr>
      <tr><th>accuracy</th><td>${fmt(r.accuracy)}</td></tr>
      <tr><th>mean entropy (normalized)</th><td>${fmt(r.mean_entropy)}</td></tr>
    </table>`;
    drawHistogram(r.set_size_histogram);
  } catch (e) {
    out.className = "err";
    out.textContent = String(e);
  }
}

function drawHistogram(counts) {
  const c = $("sim-hist");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const max = Math.max(...counts, 1);
  const w = (c.width - 40) / counts.length;
  g.font = "12px system-ui";
  counts.forEach((n, size) => {
    const h = ((c.height - 40) * n) / max;
    g.fillStyle = "#4a7bd0";
    g.fillRect(30 + size * w + 4, c.height - 20 - h, w - 8, h);
    g.fillStyle = "#222";
    g.fillText(String(size), 30 + size * w + w / 2 - 4, c.height - 5);
    g.fillText(String(n), 30 + size * w + w / 2 - 8, c.height - 24 - h);
  });
  g.fillText("prediction-set size", c.width - 130, 14);
}

function runSweep() {
  const err = $("sweep-err");
  err.textContent = "";
  try {
    const pts = JSON.parse(alpha_sweep(...params(), $("sim-fn").value, 50));
    drawSweep(pts, num("sim-k"));
  } catch (e) {
    err.textContent = String(e);
  }
}

function drawSweep(pts, k) {
  const c = $("sweep-plot");
  const g = c.getContext("2d");
  const pad = 40;
  g.clearRect(0, 0, c.width, c.height);
  const x = (a) => pad + ((a - 0.01) / 0.49) * (c.width - 2 * pad);
  const yCov = (v) => c.height - pad - v * (c.height - 2 * pad);
  const ySize = (v) => c.height - pad - (v / k) * (c.height - 2 * pad);

  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, c.width - 2 * pad, c.height - 2 * pad);
  g.setLineDash([5, 4]);
  g.beginPath();
  g.moveTo(x(0.01), yCov(0.99));
  g.lineTo(x(0.5), yCov(0.5));
  g.stroke();
  g.setLineDash([]);

  const line = (color, y, key) => {
    g.strokeStyle = color;
    g.lineWidth = 2;
    g.beginPath();
    pts.forEach((p, i) => (i ? g.lineTo(x(p.alpha), y(p[key])) : g.moveTo(x(p.alpha), y(p[key]))));
    g.stroke();
    g.lineWidth = 1;
  };
  line("#2a9d3a", yCov, "coverage");
  line("#d0664a", ySize, "set_size");

  g.fillStyle = "#222";
  g.font = "12px system-ui";
  g.fillText("alpha", c.width / 2, c.height - 8);
  g.fillText("0.01", pad - 10, c.height - pad + 14);
  g.fillText("0.5", c.width - pad - 10, c.height - pad + 14);
  g.fillStyle = "#2a9d3a";
  g.fillText("coverage (0 to 1)", pad + 8, pad - 10);
  g.fillStyle = "#d0664a";
  g.fillText(`mean set size (0 to ${k})`, pad + 150, pad - 10);
}

function runInspect() {
  const out = $("ins-out");
  try {
    const r = JSON.parse(inspect($("ins-lp").value, num("ins-q"), $("ins-fn").value));
    const rows = r.options
      .map((o) => `<tr class="${o.in_set ? "in" : ""}"><td>${o.label}</td><td>${fmt(o.prob)}</td><td>${fmt(o.score)}</td><td>${o.in_set ? "yes" : ""}</td></tr>`)
      .join("");
    out.className = "";
    out.innerHTML = `<p>prediction set: <strong>${r.set}</strong></p>
      <table><tr><th>option</th><th>probability</th><th>score</th><th>in set</th></tr>${rows}</table>`;
  } catch (e) {
    out.className = "err";
    out.textContent = String(e);
  }
}

await init();
for (const id of ["sim-n", "sim-k", "sim-seed", "sim-t", "sim-alpha", "sim-fn"]) {
  $(id).addEventListener("change", () => {
    runSimulation();
    runSweep();
  });
}
for (const id of ["ins-lp", "ins-q", "ins-fn"]) $(id).addEventListener("input", runInspect);
$("ins-use").addEventListener("click", () => {
  if (typeof lastQhat === "number") {
    $("ins-q").value = lastQhat.toFixed(4);
    $("ins-fn").value = $("sim-fn").value;
    runInspect();
  }
});
runSimulation();
runSweep();
runInspect();
