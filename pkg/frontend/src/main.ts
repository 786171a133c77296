import { Dashboard } from "./ui.js";

const DEMO_CSV = (() => {
  const rows = ["x1,utility,label"];
  for (let i = 0; i < 20; i++) {
    const x = i / 19;
    const u = -Math.pow(x - 0.7, 2) * 10 + 3;
    rows.push(`${x},${u.toFixed(6)},option ${i + 1}`);
  }
  return rows.join("\n") + "\n";
})();

function bootstrap() {
  const form = document.getElementById("setup-form") as HTMLFormElement;
  const csvInput = document.getElementById("csv-input") as HTMLTextAreaElement;
  const urlInput = document.getElementById("base-url") as HTMLInputElement;
  const sizeInput = document.getElementById("query-size") as HTMLInputElement;
  const tiesInput = document.getElementById("allow-ties") as HTMLInputElement;
  const root = document.getElementById("app") as HTMLElement;

  csvInput.value = DEMO_CSV;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const dashboard = new Dashboard(root, urlInput.value || "http://127.0.0.1:8000");
    void dashboard.createSession(csvInput.value, {
      query_size: Number(sizeInput.value) || 2,
      use_ties: tiesInput.checked,
    });
  });
}

bootstrap();
