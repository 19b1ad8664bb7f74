import init, { simulate, otsu, ocsvm_boundary } from "./pkg/cdp_authkit_web.js";

const $ = (id) => document.getElementById(id);
const SCALE = 3;
let current = null;
let points = [];

function report(e) {
  $("error").textContent = e ? String(e) : "";
}

function drawGray(canvas, img, scale = SCALE) {
  canvas.width = img.side;
  canvas.height = img.side;
  canvas.style.width = `${img.side * scale}px`;
  const ctx = canvas.getContext("2d");
  const data = ctx.createImageData(img.side, img.side);
  img.pixels.forEach((v, i) => {
    data.data.set([v, v, v, 255], 4 * i);
  });
  ctx.putImageData(data, 0, 0);
}

function figure(title, img) {
  const fig = document.createElement("figure");
  const canvas = document.createElement("canvas");
  drawGray(canvas, img);
  const cap = document.createElement("figcaption");
  cap.textContent = title;
  fig.append(canvas, cap);
  return fig;
}

function runSimulation() {
  $("gain-v").textContent = $("gain").value;
  $("noise-v").textContent = $("noise").value;
  try {
    current = JSON.parse(
      simulate(+$("seed").value, +$("nsym").value, +$("gain").value, +$("noise").value, $("attack").value),
    );
    report();
  } catch (e) {
    report(e);
    return;
  }
  const { template, original, fake } = current;
  $("codes").replaceChildren(
    figure("template", template),
    figure("original scan", original.image),
    figure("original, Otsu", original.binary),
    figure(`${fake.label} scan`, fake.image),
    figure(`${fake.label}, Otsu`, fake.binary),
  );
  const n = current.n_sym * current.n_sym;
  $("metrics").innerHTML =
    "<tr><th></th><th>Pearson vs template</th><th>symbol errors</th></tr>" +
    [original, fake]
      .map((c) => `<tr><td>${c.label}</td><td>${c.pearson.toFixed(4)}</td><td>${c.hamming} / ${n}</td></tr>`)
      .join("");
  runOtsu();
}

function runOtsu() {
  if (!current) return;
  const src = document.querySelector("input[name=otsu-src]:checked").value;
  const img = current[src].image;
  let view;
  try {
    view = JSON.parse(otsu(img.side, Uint8Array.from(img.pixels)));
  } catch (e) {
    report(e);
    return;
  }
  const canvas = $("hist");
  const ctx = canvas.getContext("2d");
  const w = canvas.width / view.histogram.length;
  const h = canvas.height;
  ctx.clearRect(0, 0, canvas.width, h);
  const top = Math.max(...view.histogram);
  ctx.fillStyle = "#555";
  view.histogram.forEach((c, k) => ctx.fillRect(k * w, h - (h * c) / top, w, (h * c) / top));
  const best = Math.max(...view.separation) || 1;
  ctx.strokeStyle = "#c00";
  ctx.beginPath();
  view.separation.forEach((s, k) => ctx.lineTo((k + 1) * w, h - (h * s) / best));
  ctx.stroke();
  ctx.strokeStyle = "#06c";
  ctx.beginPath();
  ctx.moveTo(view.threshold * canvas.width, 0);
  ctx.lineTo(view.threshold * canvas.width, h);
  ctx.stroke();
  drawGray($("otsu-bin"), view.binary);
  $("otsu-caption").textContent = `threshold ${view.threshold.toFixed(4)}`;
}

function runBoundary() {
  $("nu-v").textContent = $("nu").value;
  $("gamma-v").textContent = $("gamma").value;
  const canvas = $("svm");
  const ctx = canvas.getContext("2d");
  const size = canvas.width;
  ctx.fillStyle = "#fff";
  ctx.fillRect(0, 0, size, size);
  let view = null;
  if (points.length > 0) {
    try {
      view = JSON.parse(ocsvm_boundary(Float64Array.from(points.flat()), +$("nu").value, +$("gamma").value, 80));
      report();
    } catch (e) {
      report(e);
    }
  }
  if (view) {
    const r = view.resolution;
    const cell = size / (r - 1);
    view.decision.forEach((f, i) => {
      const x = (i % r) * cell;
      const y = size - Math.floor(i / r) * cell;
      ctx.fillStyle = f >= 0 ? "rgba(40,140,60,0.35)" : "rgba(200,60,40,0.12)";
      ctx.fillRect(x - cell / 2, y - cell / 2, cell, cell);
    });
    const outliers = view.outliers.filter(Boolean).length;
    const svs = view.support.filter(Boolean).length;
    $("svm-info").textContent = `${points.length} points, ${svs} support vectors, ${outliers} outside the boundary, ρ = ${view.rho.toFixed(4)}`;
  } else {
    $("svm-info").textContent = "";
  }
  points.forEach(([x, y], i) => {
    ctx.beginPath();
    ctx.arc(x * size, size - y * size, view && view.support[i] ? 5 : 3, 0, 2 * Math.PI);
    ctx.fillStyle = view && view.outliers[i] ? "#c00" : "#000";
    ctx.fill();
  });
}

function onCanvasClick(ev) {
  const rect = ev.target.getBoundingClientRect();
  const x = (ev.clientX - rect.left) / rect.width;
  const y = 1 - (ev.clientY - rect.top) / rect.height;
  if (ev.shiftKey && points.length > 0) {
    const d = points.map(([px, py]) => (px - x) ** 2 + (py - y) ** 2);
    points.splice(d.indexOf(Math.min(...d)), 1);
  } else {
    points.push([x, y]);
  }
  runBoundary();
}

await init();
for (const id of ["seed", "nsym", "gain", "noise", "attack"]) $(id).addEventListener("input", runSimulation);
document.querySelectorAll("input[name=otsu-src]").forEach((el) => el.addEventListener("change", runOtsu));
for (const id of ["nu", "gamma"]) $(id).addEventListener("input", runBoundary);
$("svm").addEventListener("click", onCanvasClick);
$("clear").addEventListener("click", () => {
  points = [];
  runBoundary();
});
runSimulation();
runBoundary();
