import init, { toy_domains, toy_estimate, chow_liu, skew_explore } from "./pkg/linkbn_wasm.js";

const $ = (id) => document.getElementById(id);

function fmt(x, digits = 4) {
  if (x === null || x === undefined || Number.isNaN(x)) return "–";
  return Number(x).toFixed(digits);
}

function table(head, rows) {
  const th = head.map((h) => `<th>${h}</th>`).join("");
  const body = rows.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  return `<table><thead><tr>${th}</tr></thead><tbody>${body}</tbody></table>`;
}

function showError(target, err) {
  target.innerHTML = `<p class="error">${String(err)}</p>`;
}

// 1. toy database

const JOINS = { customers: ["purchases", "customer_id"], shops: ["purchases", "shop_id"] };

function toyQuery() {
  const predicates = [];
  const touched = new Set(["purchases"]);
  for (const sel of document.querySelectorAll("#toy-filters select")) {
    if (!sel.value) continue;
    const [relation, attribute] = sel.name.split(".");
    predicates.push({ relation, attribute, op: "eq", value: sel.value });
    touched.add(relation);
  }
  touched.add("customers");
  if ($("toy-shops").checked) touched.add("shops");
  const relations = [...touched].sort();
  const joins = relations.filter((r) => JOINS[r]).map((r) => JOINS[r]);
  return { relations, joins, predicates };
}

function showToy(text) {
  const out = $("toy-out");
  try {
    const r = JSON.parse(toy_estimate(text));
    const rows = r.estimates.map((e) => [e.method, fmt(e.selectivity), fmt(e.cardinality, 2), fmt(e.q_error, 2)]);
    rows.unshift(["exact", fmt(r.true_selectivity), r.true_cardinality, "1.00"]);
    out.innerHTML =
      `<p class="muted">join size ${r.join_size}; relations ${r.query.relations.join(", ")}</p>` +
      table(["method", "selectivity", "cardinality", "q-error"], rows);
  } catch (err) {
    showError(out, err);
  }
}

function setupToy() {
  const domains = JSON.parse(toy_domains());
  const box = $("toy-filters");
  for (const [relation, attrs] of Object.entries(domains)) {
    for (const [attribute, labels] of Object.entries(attrs)) {
      const options = ["<option value=''>any</option>", ...labels.map((l) => `<option>${l}</option>`)];
      box.insertAdjacentHTML(
        "beforeend",
        `<label>${relation}.${attribute} <select name="${relation}.${attribute}">${options.join("")}</select></label>`,
      );
    }
  }
  const defaults = { "customers.nationality": "Swedish", "customers.hair": "Blond" };
  for (const sel of box.querySelectorAll("select")) {
    if (defaults[sel.name]) sel.value = defaults[sel.name];
    sel.addEventListener("change", () => showToy(JSON.stringify(toyQuery())));
  }
  $("toy-shops").addEventListener("change", () => showToy(JSON.stringify(toyQuery())));
  $("toy-sql").value =
    "SELECT * FROM customers, purchases\nWHERE customers.id = purchases.customer_id\nAND customers.hair = 'Blond'";
  $("toy-run-sql").addEventListener("click", () => showToy($("toy-sql").value));
  showToy(JSON.stringify(toyQuery()));
}

// 2. Chow-Liu playground

const SAMPLE_CSV = `city,country,nationality,eye,hair
Stockholm,Sweden,Swedish,blue,blond
Stockholm,Sweden,Swedish,blue,blond
Uppsala,Sweden,Swedish,blue,brown
Uppsala,Sweden,Danish,green,blond
Tokyo,Japan,Japanese,brown,dark
Osaka,Japan,Japanese,brown,dark
Osaka,Japan,Japanese,brown,dark
Tokyo,Japan,American,blue,brown
Boston,USA,American,green,brown
Boston,USA,American,brown,dark
Denver,USA,American,blue,blond
Denver,USA,Swedish,blue,blond`;

function runChowLiu() {
  const out = $("cl-out");
  try {
    const r = JSON.parse(chow_liu($("cl-csv").value));
    const edges = r.edges.map((e) => [`${e.parent} → ${e.child}`, fmt(e.mutual_information)]);
    const pairs = r.pairs.map((p) => [`${p.a} – ${p.b}`, fmt(p.mutual_information)]);
    out.innerHTML =
      `<p>${r.rows} rows; root <b>${r.root}</b></p>` +
      table(["tree edge", "MI (nats)"], edges) +
      table(["pair", "MI (nats)"], pairs);
  } catch (err) {
    showError(out, err);
  }
}

function setupChowLiu() {
  $("cl-csv").value = SAMPLE_CSV;
  $("cl-run").addEventListener("click", runChowLiu);
  runChowLiu();
}

// 3. skew explorer

function runSkew() {
  const params = {
    skew: Number($("sk-skew").value),
    correlation: Number($("sk-corr").value),
    customers: Number($("sk-n").value),
    fanout: Number($("sk-f").value),
    seed: Number($("sk-seed").value),
  };
  $("sk-skew-v").textContent = params.skew.toFixed(2);
  $("sk-corr-v").textContent = params.correlation.toFixed(2);
  const out = $("sk-out");
  try {
    const r = JSON.parse(skew_explore(JSON.stringify(params)));
    const summary = Object.entries(r.summary).map(([m, [median, max]]) => [m, fmt(median, 2), fmt(max, 2)]);
    const shares = r.shares.map(([label, pre, post]) => [
      label,
      `<span class="bar" style="width:${(pre * 200).toFixed(0)}px"></span> ${fmt(pre, 3)}`,
      `<span class="bar post" style="width:${(post * 200).toFixed(0)}px"></span> ${fmt(post, 3)}`,
    ]);
    const rows = r.rows.map((row) => [
      row.hair ? `${row.nationality}, ${row.hair}` : row.nationality,
      row.truth,
      fmt(row.estimates.avi, 1),
      fmt(row.estimates.k0, 1),
      fmt(row.estimates.k1, 1),
    ]);
    out.innerHTML =
      `<p class="muted">${r.purchases} purchases</p>` +
      table(["method", "median q-error", "max q-error"], summary) +
      table(["nationality", "share of customers", "share of purchases"], shares) +
      `<details><summary>every query</summary>${table(["filter", "true", "avi", "k0", "k1"], rows)}</details>`;
  } catch (err) {
    showError(out, err);
  }
}

function setupSkew() {
  for (const id of ["sk-skew", "sk-corr", "sk-n", "sk-f", "sk-seed"]) {
    $(id).addEventListener("input", runSkew);
  }
  runSkew();
}

init().then(() => {
  setupToy();
  setupChowLiu();
  setupSkew();
});
