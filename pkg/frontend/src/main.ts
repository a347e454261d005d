import { AnnotatorApp } from "./app.js";

function annotatorId(): string {
  const existing = window.localStorage.getItem("annotator-id");
  if (existing) return existing;
  const fresh = `annotator-${Math.random().toString(36).slice(2, 8)}`;
  window.localStorage.setItem("annotator-id", fresh);
  return fresh;
}

const root = document.getElementById("app");
if (root) {
  const app = new AnnotatorApp(root, annotatorId(), window.localStorage);
  void app.start();
}
